from sqlalchemy import Column, DateTime, Integer, String, Text, UniqueConstraint
from sqlalchemy.sql import func

from .database import Base


class CachedResponse(Base):
    __tablename__ = 'responses'
    id = Column(Integer, primary_key=True, index=True)
    endpoint = Column(String, nullable=False, index=True)
    query = Column(String, nullable=False)
    status = Column(Integer, nullable=False)
    body = Column(Text, nullable=False)
    fetched_at = Column(DateTime(timezone=True), server_default=func.now())

    __table_args__ = (
        UniqueConstraint('endpoint', 'query', name='uq_endpoint_query'),
    )
