"""Synthetic mini-benchmark: databases, questions, overlays, scripted plans.

The corpus is built around synonym concepts: questions use the everyday
word of a concept while the matching column uses a different schema-ish
word, so a bag-of-tokens embedder cannot link them without a trained
projection. Each concept column's description name-drops the *previous*
concept's everyday word, which makes every column a convincing distractor
for some other question: surface-similar, yet never part of the gold SQL.

Alongside the corpus, scripted generator plans of graded quality are
emitted so correction loops, ablations, and preference-pair construction
run deterministically offline.
"""

from __future__ import annotations

import json
import random
import sqlite3
from dataclasses import dataclass
from pathlib import Path

from .corpus import OverlayEntry, QuestionRecord, save_corpus, save_overlay

# (question word, column word); single tokens, pairwise distinct.
CONCEPTS = [
    ("customers", "patrons"), ("revenue", "proceeds"), ("shipments", "consignments"),
    ("salary", "stipend"), ("attendance", "turnout"), ("ratings", "appraisals"),
    ("inventory", "stockpile"), ("refunds", "reimbursements"), ("downloads", "fetches"),
    ("complaints", "grievances"), ("bookings", "reservations"), ("mileage", "odometer"),
    ("temperature", "thermals"), ("donations", "endowments"), ("enrollment", "matriculants"),
    ("overtime", "extrashift"), ("profit", "margin"), ("visitors", "footfall"),
    ("expenses", "outlays"), ("subscribers", "members"), ("accidents", "mishaps"),
    ("vacancies", "openings"), ("discounts", "markdowns"), ("deliveries", "dropoffs"),
    ("returns", "sendbacks"), ("clicks", "taps"), ("views", "impressions"),
    ("sales", "turnover"), ("wages", "remuneration"), ("debts", "liabilities"),
    ("assets", "holdings"), ("injuries", "casualties"), ("arrivals", "checkins"),
    ("departures", "checkouts"), ("cancellations", "annulments"), ("upgrades", "promotions"),
    ("faults", "defects"), ("payments", "remittances"), ("logins", "signons"),
    ("messages", "dispatches"), ("students", "pupils"), ("teachers", "instructors"),
    ("patients", "admissions"), ("medicines", "remedies"), ("vehicles", "fleetcars"),
    ("routes", "itineraries"), ("warehouses", "depots"), ("invoices", "billings"),
    ("contracts", "agreements"), ("penalties", "fines"), ("bonuses", "incentives"),
    ("audits", "inspections"), ("outages", "downtimes"), ("backlog", "pendings"),
]

TABLE_THEMES = ["accounts", "operations", "archive", "registry", "metrics", "records"]

_BIRD_DIFFICULTIES = ["simple", "moderate", "challenging"]
_SPIDER_DIFFICULTIES = ["easy", "medium", "hard", "extra"]

_COLUMN_TYPES = ["INTEGER", "REAL", "TEXT"]


@dataclass
class FixtureManifest:
    root: Path
    seed: int
    db_ids: list[str]
    corpus_path: Path
    corpus_main_path: Path
    corpus_alt_path: Path
    databases_dir: Path
    plan_paths: dict[str, Path]

    def db_path(self, db_id: str) -> Path:
        return self.databases_dir / db_id / f"{db_id}.sqlite"

    def overlay_path(self, db_id: str) -> Path:
        return self.databases_dir / db_id / "overlay.json"


def _question_text(qwords: list[str], with_filter: bool) -> str:
    if len(qwords) == 1:
        text = f"What is the {qwords[0]} for each entry?"
    elif len(qwords) == 2:
        text = f"List the {qwords[0]} and the {qwords[1]}."
    else:
        text = f"Show the {qwords[0]}, the {qwords[1]} and the {qwords[2]} combined."
    if with_filter:
        text += " Count only entries where data exists."
    return text


def _create_database(path: Path, tables: dict[str, list[tuple[str, str]]],
                     rng: random.Random) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists():
        path.unlink()
    conn = sqlite3.connect(path)
    try:
        previous = None
        for table, columns in tables.items():
            defs = ["id INTEGER PRIMARY KEY"]
            if previous is not None:
                defs[0] += f" REFERENCES {previous}(id)"
            defs += [f'"{name}" {ctype}' for name, ctype in columns]
            conn.execute(f'CREATE TABLE "{table}" ({", ".join(defs)})')
            rows = []
            base = rng.randint(10, 99)
            for r in range(4):
                row = [r + 1]
                for c, (name, ctype) in enumerate(columns):
                    if ctype == "INTEGER":
                        row.append(base * 100 + c * 10 + r)
                    elif ctype == "REAL":
                        row.append(base + c * 7 + r + 0.5)
                    else:
                        row.append(f"{name}_{base}_{r}")
                rows.append(row)
            placeholders = ", ".join("?" for _ in range(len(columns) + 1))
            conn.executemany(f'INSERT INTO "{table}" VALUES ({placeholders})', rows)
            previous = table
        conn.commit()
    finally:
        conn.close()


def _plan_variants(gold_sql: str, table: str, first_column: str,
                   wrong_column: str) -> dict[str, str]:
    # the broken-column variant must be unquoted: sqlite treats an unknown
    # double-quoted identifier in expression context as a string literal
    return {
        "gold": gold_sql,
        "syntax": "SELEC" + gold_sql[6:],
        "bad_column": gold_sql.replace(f'"{first_column}"', f"phantom_{first_column}", 1),
        "bad_table": gold_sql.replace(f'FROM "{table}"', 'FROM "phantom_table"'),
        "wrong": f'SELECT "{wrong_column}" FROM "{table}"',
        "write": f'INSERT INTO "{table}" (id) VALUES (999)',
    }


def make_fixture(out_dir, n_databases: int = 20, questions_per_db: int = 10,
                 tables_per_db: int = 6, concept_columns_per_table: int = 9,
                 seed: int = 7) -> FixtureManifest:
    """Build the synthetic corpus under ``out_dir`` and return its manifest."""
    if tables_per_db > len(TABLE_THEMES):
        raise ValueError(f"at most {len(TABLE_THEMES)} tables per database")
    n_concepts = tables_per_db * concept_columns_per_table
    if n_concepts > len(CONCEPTS):
        raise ValueError(f"at most {len(CONCEPTS)} concept columns per database")

    root = Path(out_dir)
    databases_dir = root / "databases"
    plans_dir = root / "plans"
    plans_dir.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)

    concepts = CONCEPTS[:n_concepts]
    distractor_hook = {
        col: CONCEPTS[(j - 1) % n_concepts][0] for j, (_q, col) in enumerate(concepts)
    }

    records: list[QuestionRecord] = []
    plans: dict[str, dict[str, list[str]]] = {
        "strong": {}, "weak": {}, "repairable": {}, "candidates": {},
    }
    db_ids = []

    for d in range(n_databases):
        db_id = f"fixdb{d:02d}"
        db_ids.append(db_id)
        assignment = list(range(n_concepts))
        rng.shuffle(assignment)

        tables: dict[str, list[tuple[str, str]]] = {}
        for t in range(tables_per_db):
            table = TABLE_THEMES[t]
            columns = []
            for c in range(concept_columns_per_table):
                concept_idx = assignment[t * concept_columns_per_table + c]
                _qword, colword = concepts[concept_idx]
                ctype = _COLUMN_TYPES[(t + c) % len(_COLUMN_TYPES)]
                columns.append((colword, ctype))
            tables[table] = columns

        _create_database(databases_dir / db_id / f"{db_id}.sqlite", tables, rng)

        overlay = []
        for table, columns in tables.items():
            for i, (colword, _ctype) in enumerate(columns):
                overlay.append(OverlayEntry(
                    table=table,
                    column=colword,
                    column_description=f"Notes about the {distractor_hook[colword]} figures.",
                    value_description="Stored as plain cell contents." if i % 3 == 2 else None,
                ))
        save_overlay(overlay, databases_dir / db_id / "overlay.json")

        with_evidence = d < n_databases // 2
        difficulties = _BIRD_DIFFICULTIES if with_evidence else _SPIDER_DIFFICULTIES
        for qn in range(questions_per_db):
            qid = f"{db_id}-q{qn:02d}"
            table = TABLE_THEMES[rng.randrange(tables_per_db)]
            n_gold = 1 + (qn % 3)
            picks = rng.sample(range(concept_columns_per_table), n_gold + 1)
            gold_cols = [tables[table][p][0] for p in picks[:n_gold]]
            wrong_col = tables[table][picks[n_gold]][0]
            qwords = []
            for col in gold_cols:
                idx = next(j for j, (_q, c) in enumerate(concepts) if c == col)
                qwords.append(concepts[idx][0])

            with_filter = qn % 2 == 1 and n_gold >= 2
            if with_filter:
                selected = ", ".join(f'"{c}"' for c in gold_cols[:-1])
                gold_sql = (f'SELECT {selected} FROM "{table}" '
                            f'WHERE "{gold_cols[-1]}" IS NOT NULL')
            else:
                selected = ", ".join(f'"{c}"' for c in gold_cols)
                gold_sql = f'SELECT {selected} FROM "{table}"'

            evidence = (
                f"Here {qwords[0]} denotes the most recent reported figure."
                if with_evidence else None
            )
            records.append(QuestionRecord(
                question_id=qid,
                db_id=db_id,
                question=_question_text(qwords, with_filter),
                evidence=evidence,
                gold_sql=gold_sql,
                difficulty=difficulties[qn % len(difficulties)],
            ))

            v = _plan_variants(gold_sql, table, gold_cols[0], wrong_col)
            plans["strong"][qid] = [v["gold"]]
            plans["repairable"][qid] = [v["syntax"], v["gold"]]
            bucket = qn % 10
            if bucket <= 3:
                plans["weak"][qid] = [v["gold"]]
            elif bucket <= 5:
                plans["weak"][qid] = [v["syntax"], v["gold"]]
            elif bucket == 6:
                plans["weak"][qid] = [v["bad_column"], v["gold"]]
            elif bucket == 7:
                plans["weak"][qid] = [v["bad_table"], v["bad_column"], v["gold"]]
            elif bucket == 8:
                plans["weak"][qid] = [v["wrong"]]
            else:
                plans["weak"][qid] = [v["syntax"], v["write"], v["syntax"], v["write"]]
            plans["candidates"][qid] = [
                v["gold"], v["wrong"], v["syntax"], v["bad_column"], v["bad_table"], v["gold"],
            ]

    corpus_path = root / "corpus.json"
    corpus_main_path = root / "corpus_main.json"
    corpus_alt_path = root / "corpus_alt.json"
    save_corpus(records, corpus_path)
    main_ids = set(db_ids[: n_databases // 2])
    save_corpus([r for r in records if r.db_id in main_ids], corpus_main_path)
    save_corpus([r for r in records if r.db_id not in main_ids], corpus_alt_path)

    plan_paths = {}
    for name, plan in plans.items():
        path = plans_dir / f"{name}.json"
        path.write_text(json.dumps(plan, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        plan_paths[name] = path

    manifest = FixtureManifest(
        root=root, seed=seed, db_ids=db_ids,
        corpus_path=corpus_path, corpus_main_path=corpus_main_path,
        corpus_alt_path=corpus_alt_path,
        databases_dir=databases_dir, plan_paths=plan_paths,
    )
    (root / "manifest.json").write_text(json.dumps({
        "seed": seed,
        "db_ids": db_ids,
        "corpus": corpus_path.name,
        "corpus_main": corpus_main_path.name,
        "corpus_alt": corpus_alt_path.name,
        "databases_dir": databases_dir.name,
        "plans": {k: str(v.relative_to(root)) for k, v in plan_paths.items()},
    }, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def load_plan(path) -> dict[str, list[str]]:
    return json.loads(Path(path).read_text(encoding="utf-8"))
