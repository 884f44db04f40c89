# server/routers/tasks.py
from __future__ import annotations

from fastapi import APIRouter, HTTPException

from pickplace.errors import ArgumentError
from pickplace.tasks.registry import TASKS, get_task

from ..models import TaskInfo

router = APIRouter(prefix="/api", tags=["tasks"])


@router.get("/tasks")
def list_tasks():
    return {"ok": True, "tasks": [TaskInfo(**t.model_dump()).model_dump() for t in TASKS.values()]}


@router.get("/tasks/{task_id}")
def task(task_id: str):
    try:
        return {"ok": True, "task": TaskInfo(**get_task(task_id).model_dump()).model_dump()}
    except ArgumentError as e:
        raise HTTPException(404, str(e))
