import os

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from config import DATA_DIR, logger
from service import router as eign_router

# Initialize the FastAPI app
app = FastAPI(title="EIGN edge-level graph learning")

# Configure CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(eign_router, prefix="/api", tags=["eign"])


@app.get("/api/health")
async def health():
    return {"status": "ok", "data_dir": str(DATA_DIR)}


def serve(host: str = "0.0.0.0", port: int = 8080) -> None:
    import uvicorn

    logger.info("=" * 50)
    logger.info(f"EIGN service on {host}:{port}")
    logger.info("=" * 50)
    uvicorn.run(app, host=host, port=port, proxy_headers=True, forwarded_allow_ips="*")


# Run the server when executed directly
if __name__ == "__main__":
    serve(port=int(os.environ.get("PORT", 8080)))
