from typing import Optional

from sqlalchemy.orm import Session

from . import models


# fetch by key

def get_response(db: Session, endpoint: str, query: str):
    return db.query(models.CachedResponse).filter(
        models.CachedResponse.endpoint == endpoint,
        models.CachedResponse.query == query,
    ).first()


def put_response(db: Session, endpoint: str, query: str, status: int, body: str):
    """Insert or replace the memoized response for (endpoint, query)."""
    row = get_response(db, endpoint, query)
    if row is None:
        row = models.CachedResponse(endpoint=endpoint, query=query, status=status, body=body)
        db.add(row)
    else:
        row.status = status
        row.body = body
    db.commit()
    db.refresh(row)
    return row


def count_responses(db: Session, endpoint: Optional[str] = None) -> int:
    q = db.query(models.CachedResponse)
    if endpoint is not None:
        q = q.filter(models.CachedResponse.endpoint == endpoint)
    return q.count()
