from contextlib import contextmanager
from pathlib import Path

from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

Base = declarative_base()

CACHE_DB_NAME = "responses.sqlite"


def make_session_factory(cache_dir: Path) -> sessionmaker:
	"""Open (and create if needed) the response cache database under ``cache_dir``."""
	cache_dir = Path(cache_dir)
	cache_dir.mkdir(parents=True, exist_ok=True)
	engine = create_engine(
		f"sqlite:///{cache_dir / CACHE_DB_NAME}",
		connect_args={"check_same_thread": False},
		pool_pre_ping=True,
	)
	# create tables on first use; the cache has no migrations
	from . import models  # noqa: F401
	Base.metadata.create_all(bind=engine)
	return sessionmaker(autocommit=False, autoflush=False, bind=engine)


@contextmanager
def session_scope(factory: sessionmaker):
	db = factory()
	try:
		yield db
	finally:
		db.close()
