# server/routers/exports.py
from __future__ import annotations

from fastapi import APIRouter, Depends, HTTPException
from fastapi.responses import FileResponse

from ..config import Settings
from ..security import require_api_key
from ..services.jobs import artifacts_dir

router = APIRouter(prefix="/api", tags=["exports"], dependencies=[Depends(require_api_key)])


@router.get("/exports/{job_id}")
def list_artifacts(job_id: str):
    try:
        aroot = artifacts_dir(Settings(), job_id)
    except ValueError as e:
        raise HTTPException(400, str(e))
    if not aroot.exists():
        return {"ok": True, "artifacts": []}
    items = []
    for fp in sorted(p for p in aroot.rglob("*") if p.is_file()):
        rel = fp.relative_to(aroot).as_posix()
        items.append({"label": rel, "href": f"/api/exports/{job_id}/{rel}", "bytes": fp.stat().st_size})
    return {"ok": True, "artifacts": items}


@router.get("/exports/{job_id}/{filename:path}")
def download(job_id: str, filename: str):
    try:
        aroot = artifacts_dir(Settings(), job_id)
    except ValueError as e:
        raise HTTPException(400, str(e))
    path = (aroot / filename).resolve()
    if aroot not in path.parents or not path.is_file():
        raise HTTPException(404, "file not found")
    return FileResponse(str(path), filename=path.name)
