"""HTTP service exposing schemas, retrieval, execution, and the ask loop.

All endpoints are read-only with respect to the databases; traces come
back whole (attempts, outcomes, result rows capped at the configured row
limit) so a client can render the correction loop without streaming.
"""

from __future__ import annotations

import logging
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .errors import SquillError
from .executor import execute_sql
from .retriever import retrieve_columns
from .corpus import QuestionRecord
from .runtime import EngineRuntime, RuntimeConfig

log = logging.getLogger(__name__)


class RetrieveRequest(BaseModel):
    db_id: str
    question: str = Field(min_length=1)
    evidence: str | None = None
    k: int | None = Field(default=None, ge=1)


class AskRequest(BaseModel):
    db_id: str
    question: str = Field(min_length=1)
    evidence: str | None = None
    k: int | None = Field(default=None, ge=1)
    max_iterations: int | None = Field(default=None, ge=0)


class ExecuteRequest(BaseModel):
    db_id: str
    sql: str = Field(min_length=1)


def create_app(runtime: EngineRuntime) -> FastAPI:
    app = FastAPI(title="squill", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )
    cfg = runtime.cfg

    def require_db(db_id: str):
        if db_id not in runtime.databases:
            raise HTTPException(status_code=404, detail=f"unknown database {db_id!r}")

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/config")
    def config():
        return {
            "k": cfg.k,
            "max_iterations": cfg.max_iterations,
            "row_cap": cfg.row_cap,
            "timeout": cfg.timeout,
        }

    @app.get("/databases")
    def databases():
        out = []
        for db_id in sorted(runtime.databases):
            schema = runtime.schema(db_id)
            out.append({
                "db_id": db_id,
                "tables": len(schema.table_names()),
                "columns": len(schema.columns),
            })
        return {"databases": out}

    @app.get("/schema/{db_id}")
    def schema(db_id: str):
        require_db(db_id)
        s = runtime.schema(db_id)
        tables: dict[str, list] = {}
        for col in s.columns:
            tables.setdefault(col.table_name, []).append({
                "name": col.column_name,
                "type": col.data_type,
                "primary_key": col.is_primary_key,
                "description": col.column_description,
                "value_description": col.value_description,
                "sample_values": [str(v) for v in col.sample_values],
            })
        return {
            "db_id": db_id,
            "tables": [{"name": name, "columns": cols} for name, cols in tables.items()],
            "foreign_keys": [
                [a.dotted(), b.dotted()] for a, b in s.foreign_key_edges
            ],
        }

    @app.post("/retrieve")
    def retrieve(req: RetrieveRequest):
        require_db(req.db_id)
        q = QuestionRecord(question_id="adhoc", db_id=req.db_id,
                           question=req.question, evidence=req.evidence)
        result = retrieve_columns(q, runtime.index(req.db_id), runtime.provider,
                                  runtime.head, k=req.k or cfg.k)
        return {
            "db_id": req.db_id,
            "k": result.k,
            "columns": [
                {"table": ref.table_name, "column": ref.column_name, "score": score}
                for ref, score in result.ranked_columns
            ],
        }

    @app.post("/ask")
    def ask(req: AskRequest):
        require_db(req.db_id)
        try:
            trace = runtime.ask(req.db_id, req.question, evidence=req.evidence,
                                k=req.k, max_iterations=req.max_iterations)
        except SquillError as exc:
            raise HTTPException(status_code=503, detail=str(exc)) from exc
        return trace.to_dict(row_cap=cfg.row_cap)

    @app.post("/execute")
    def execute(req: ExecuteRequest):
        require_db(req.db_id)
        outcome = execute_sql(runtime.db_path(req.db_id), req.sql, timeout=cfg.timeout)
        return outcome.to_dict(row_cap=cfg.row_cap)

    static_dir = cfg.static_dir
    if static_dir is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        static_dir = bundled if bundled.is_dir() else None
    if static_dir is not None and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="console")
    return app


def serve(cfg: RuntimeConfig) -> None:
    import uvicorn

    runtime = EngineRuntime(cfg)
    app = create_app(runtime)
    log.info("serving %d databases on %s:%d", len(runtime.databases), cfg.host, cfg.port)
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="info")
