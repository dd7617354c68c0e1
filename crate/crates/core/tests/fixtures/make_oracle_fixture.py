"""Writes employees_oracle.jsonl: recorded oracle answers for the
AVG(Salary) by Degree, Department table of employees.csv."""

import hashlib
import json
from pathlib import Path

AGG = "Average Salary"


def entry(query, payload):
    canonical = json.dumps(query, separators=(",", ":"), ensure_ascii=False)
    context = {k: v for k, v in query.items() if k != "kind"}
    return {
        "query_hash": hashlib.sha256(canonical.encode()).hexdigest(),
        "kind": query["kind"],
        "context": context,
        "response": {"payload": payload, "provider": "remote", "cached": False, "flagged": False},
    }


def corr(first, second, across, level):
    q = {"kind": "correlation_unlikelihood", "aggregate": AGG, "first": first,
         "second": second, "direction": "positive", "across": across}
    return entry(q, {"likert": level})


def ratio(larger, smaller, factor, across, level):
    q = {"kind": "ratio_unlikelihood", "aggregate": AGG, "larger": larger,
         "smaller": smaller, "factor": factor, "across": across}
    return entry(q, {"likert": level})


def sig(attr, dtype):
    return entry({"kind": "significance", "attribute": attr, "data_type": dtype}, {"score": 1.0})


entries = [
    sig("Salary", "numeric"),
    sig("Degree", "text"),
    sig("Department", "text"),
    entry({"kind": "aggregate_ranking", "attribute": "Salary", "data_type": "numeric"},
          {"ranking": ["AVG", "SUM", "MAX", "MIN", "COUNT"]}),
    corr("BS", "MS", ["IT", "Sales"], "very_likely"),
    corr("BS", "PhD", ["IT", "Sales"], "likely"),
    corr("MS", "PhD", ["IT", "Sales"], "likely"),
    corr("IT", "Sales", ["BS", "MS", "PhD"], "likely"),
    ratio("PhD", "BS", 4.0, ["IT", "Sales"], "very_unlikely"),
    ratio("PhD", "MS", 2.0, ["IT", "Sales"], "unlikely"),
]

out = Path(__file__).with_name("employees_oracle.jsonl")
out.write_text("".join(json.dumps(e, separators=(",", ":")) + "\n" for e in entries))
