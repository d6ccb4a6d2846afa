from functools import lru_cache
from pathlib import Path
from typing import Generator, Optional, Union
import os

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import declarative_base, sessionmaker, Session

# Shared registry for all runs; when unset each run directory gets its own sqlite file.
DATABASE_URL = os.getenv("SNLS_DATABASE_URL")

REGISTRY_FILENAME = "runs.sqlite"

Base = declarative_base()


def registry_url(run_dir: Union[str, Path, None] = None) -> str:
    if DATABASE_URL:
        return DATABASE_URL
    if run_dir is None:
        return "sqlite://"
    return f"sqlite:///{Path(run_dir).resolve() / REGISTRY_FILENAME}"


@lru_cache(maxsize=16)
def get_engine(url: str) -> Engine:
    engine = create_engine(url)
    # Import models so they are registered on Base before create_all
    from snls_lab.db import models  # noqa: F401
    Base.metadata.create_all(bind=engine)
    return engine


def get_db(run_dir: Union[str, Path, None] = None, url: Optional[str] = None) -> Generator[Session, None, None]:
    """
    Yields a session bound to the run registry
    """
    engine = get_engine(url or registry_url(run_dir))
    SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()
