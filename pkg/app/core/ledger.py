# app/core/ledger.py
import datetime
import hashlib
import json
import threading
from collections import defaultdict
from pathlib import Path
from typing import Any, Dict, List, Optional

from app.core.logging import logger

KINDS = ("hf", "lf", "sv")
PURPOSES = ("phase1", "train", "eval", "baseline", "oracle", "experiment")

class CostLedger:
    """
    Append-only cost ledger of model evaluations.

    Each entry is chained to the previous one through a SHA-256 hash, so removed,
    edited or reordered entries are detected by verify(). Counts used for speedup
    and budget arithmetic are read back from here and nowhere else.

    A ledger without a path keeps its entries in memory only.
    """

    INITIAL_CHAIN_HASH = "0" * 64

    def __init__(self, path: Optional[Path] = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._entries: List[Dict[str, Any]] = []
        if self.path is not None and self.path.exists():
            with open(self.path, "r") as f:
                self._entries = [json.loads(line) for line in f if line.strip()]

    @property
    def entries(self) -> List[Dict[str, Any]]:
        return list(self._entries)

    def begin_run(self, stage: str, config_hash: str) -> int:
        """Open a new run of a stage and return its run number"""
        run = 1 + max((e["run"] for e in self._entries if e["stage"] == stage), default=0)
        self._append({
            "stage": stage,
            "run": run,
            "kind": "marker",
            "purpose": "start",
            "count": 0,
            "unit_cost": 0.0,
            "wall_seconds": 0.0,
            "config_hash": config_hash,
        })
        logger.debug(f"Ledger: started {stage} run {run}")
        return run

    def record(
        self,
        stage: str,
        run: int,
        kind: str,
        purpose: str,
        count: int,
        unit_cost: float,
        wall_seconds: float = 0.0,
        config_hash: str = "",
    ) -> Dict[str, Any]:
        """
        Append an evaluation record.

        Args:
            stage: CLI stage the evaluations belong to
            run: Run number returned by begin_run
            kind: 'hf', 'lf' or 'sv'
            purpose: 'phase1', 'train', 'eval', 'baseline', 'oracle' or 'experiment'
            count: Number of evaluations
            unit_cost: Declared cost per evaluation
            wall_seconds: Measured wall time for the whole batch

        Returns:
            Dict: The stored entry
        """
        if kind not in KINDS:
            raise ValueError(f"Unknown evaluation kind '{kind}'")
        if purpose not in PURPOSES:
            raise ValueError(f"Unknown purpose '{purpose}'")
        if count < 0:
            raise ValueError("count must be non-negative")
        entry = {
            "stage": stage,
            "run": run,
            "kind": kind,
            "purpose": purpose,
            "count": int(count),
            "unit_cost": float(unit_cost),
            "wall_seconds": float(wall_seconds),
            "config_hash": config_hash,
        }
        return self._append(entry)

    def _append(self, entry: Dict[str, Any]) -> Dict[str, Any]:
        with self._lock:
            entry = dict(entry)
            entry["seq"] = len(self._entries)
            entry["timestamp"] = datetime.datetime.now().isoformat()
            prev_hash = self._entries[-1]["chain_hash"] if self._entries else self.INITIAL_CHAIN_HASH
            entry["chain_hash"] = self._chain_hash(entry, prev_hash)
            self._entries.append(entry)
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a") as f:
                    f.write(json.dumps(entry, sort_keys=True) + "\n")
            return entry

    @staticmethod
    def _chain_hash(entry: Dict[str, Any], prev_hash: str) -> str:
        body = {k: v for k, v in entry.items() if k != "chain_hash"}
        message = prev_hash + json.dumps(body, sort_keys=True)
        return hashlib.sha256(message.encode()).hexdigest()

    def latest_run(self, stage: str) -> Optional[int]:
        runs = [e["run"] for e in self._entries if e["stage"] == stage]
        return max(runs) if runs else None

    def totals(self, stage: Optional[str] = None, run: Optional[int] = None) -> Dict[str, int]:
        """
        Evaluation counts keyed 'kind/purpose'.

        With a stage and no run, only the latest run of that stage is counted.
        """
        if stage is not None and run is None:
            run = self.latest_run(stage)
        counts: Dict[str, int] = defaultdict(int)
        for e in self._entries:
            if e["kind"] == "marker":
                continue
            if stage is not None and (e["stage"] != stage or e["run"] != run):
                continue
            counts[f"{e['kind']}/{e['purpose']}"] += e["count"]
        return dict(sorted(counts.items()))

    def count(self, kind: str, purpose: str, stage: Optional[str] = None, run: Optional[int] = None) -> int:
        return self.totals(stage, run).get(f"{kind}/{purpose}", 0)

    def cost(self, stage: Optional[str] = None, run: Optional[int] = None) -> float:
        """Declared cost (count x unit cost) summed over the selected entries"""
        if stage is not None and run is None:
            run = self.latest_run(stage)
        return sum(
            e["count"] * e["unit_cost"]
            for e in self._entries
            if e["kind"] != "marker" and (stage is None or (e["stage"] == stage and e["run"] == run))
        )

    def mean_wall_seconds(self) -> Dict[str, float]:
        """Measured wall seconds per evaluation, by kind"""
        seconds: Dict[str, float] = defaultdict(float)
        counts: Dict[str, int] = defaultdict(int)
        for e in self._entries:
            if e["kind"] in KINDS and e["count"] > 0 and e["wall_seconds"] > 0:
                seconds[e["kind"]] += e["wall_seconds"]
                counts[e["kind"]] += e["count"]
        return {k: seconds[k] / counts[k] for k in counts}

    def verify(self) -> Dict[str, Any]:
        """
        Verify the integrity of the hash chain.

        Returns:
            Dict with verification results
        """
        results: Dict[str, Any] = {
            "valid": True,
            "total_entries": len(self._entries),
            "verified_entries": 0,
            "invalid_entries": [],
            "file": str(self.path) if self.path else None,
        }
        prev_hash = self.INITIAL_CHAIN_HASH
        for i, entry in enumerate(self._entries):
            stored = entry.get("chain_hash")
            expected = self._chain_hash(entry, prev_hash)
            if stored != expected or entry.get("seq") != i:
                results["valid"] = False
                results["invalid_entries"].append({"line": i + 1, "seq": entry.get("seq")})
            else:
                results["verified_entries"] += 1
            prev_hash = stored or prev_hash
        return results
