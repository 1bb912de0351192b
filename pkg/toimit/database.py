# toimit/database.py - sets up the run registry database
import functools
from typing import Optional

from sqlalchemy import create_engine
from sqlalchemy.orm import Session, sessionmaker

from toimit.config import settings
from toimit.models import Base


def make_engine(url: str):
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, connect_args=connect_args)


@functools.lru_cache(maxsize=None)
def _session_factory(url: str) -> sessionmaker:
    engine = make_engine(url)
    init_db(engine)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)


def SessionLocal(url: Optional[str] = None) -> Session:
    """A session on the registry at `url`, default settings.registry_url; tables are created on first use."""
    return _session_factory(url or settings.registry_url)()


def init_db(engine) -> None:
    Base.metadata.create_all(bind=engine)
