"""Run traces and their JSON / CSV forms."""
import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = ["IterationRecord", "RunTrace", "CSV_COLUMNS", "fmt", "trace_rows", "trace_csv", "write_csv"]

CSV_COLUMNS = ["t", "K_t0", "K_t1", "E_t0", "E_t1", "dE", "chosen", "K_t",
               "msd", "residual", "elapsed_us"]


def fmt(v):
    """Decimal text for CSV cells; 17 significant digits round-trips a double."""
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


@dataclass
class IterationRecord:
    """One iteration of any algorithm.

    ``k``, ``support``, ``values`` and ``residual`` describe the estimate
    kept at the end of the iteration. The candidate fields are only filled
    by MCHTP.
    """
    t: int
    k: int
    support: np.ndarray
    values: np.ndarray
    residual: float
    elapsed_us: float = None
    k0: int = None
    k1: int = None
    e0: float = None
    e1: float = None
    de: float = None
    chosen: int = None
    support0: np.ndarray = None
    support1: np.ndarray = None
    values0: np.ndarray = None
    values1: np.ndarray = None

    def estimate(self, n):
        z = np.zeros(n)
        z[self.support] = self.values
        return z

    def candidate(self, i, n):
        supp, vals = (self.support0, self.values0) if i == 0 else (self.support1, self.values1)
        z = np.zeros(n)
        z[supp] = vals
        return z

    def to_dict(self, full=False, timing=False):
        d = {"t": self.t, "k": self.k, "residual": self.residual}
        if self.k0 is not None:
            d.update(k0=self.k0, k1=self.k1, e0=self.e0, e1=self.e1,
                     de=self.de, chosen=self.chosen)
        if full:
            d["support"] = self.support.tolist()
            d["values"] = self.values.tolist()
            if self.support0 is not None:
                d["support0"] = self.support0.tolist()
                d["support1"] = self.support1.tolist()
        if timing:
            d["elapsed_us"] = self.elapsed_us
        return d


@dataclass
class RunTrace:
    algorithm: str
    n: int
    config: dict
    records: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def append(self, rec):
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    @property
    def final(self):
        return self.records[-1] if self.records else None

    @property
    def x_hat(self):
        return self.final.estimate(self.n) if self.records else np.zeros(self.n)

    @property
    def sparsities(self):
        return np.array([r.k for r in self.records], dtype=np.int64)

    @property
    def final_sparsity(self):
        return self.records[-1].k if self.records else 0

    def estimates(self):
        for rec in self.records:
            yield rec.estimate(self.n)

    def to_dict(self, full=False, timing=False):
        fin = self.final
        return {
            "algorithm": self.algorithm,
            "n": self.n,
            "config": self.config,
            "info": self.info,
            "final": {
                "k": self.final_sparsity,
                "support": [] if fin is None else fin.support.tolist(),
                "values": [] if fin is None else fin.values.tolist(),
            },
            "records": [r.to_dict(full, timing) for r in self.records],
        }

    def to_json(self, full=False, timing=False):
        return json.dumps(self.to_dict(full, timing), sort_keys=True)


def trace_rows(trace, x_true=None, timing=False):
    """Per-iteration rows keyed by ``CSV_COLUMNS``."""
    rows = []
    for rec in trace.records:
        msd = None
        if x_true is not None:
            d = rec.estimate(trace.n) - x_true
            msd = float(d @ d) / trace.n
        rows.append({
            "t": rec.t, "K_t0": rec.k0, "K_t1": rec.k1, "E_t0": rec.e0,
            "E_t1": rec.e1, "dE": rec.de, "chosen": rec.chosen, "K_t": rec.k,
            "msd": msd, "residual": rec.residual,
            "elapsed_us": rec.elapsed_us if timing else None,
        })
    return rows


def write_csv(path_or_buf, columns, rows, header_comment=None):
    """Write rows with fixed ``columns``; an optional ``# ...`` first line carries metadata."""
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        if header_comment is not None:
            fh.write("# " + header_comment + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row.get(c)) for c in columns])
    finally:
        if own:
            fh.close()


def trace_csv(trace, x_true=None, timing=False):
    buf = io.StringIO()
    write_csv(buf, CSV_COLUMNS, trace_rows(trace, x_true, timing))
    return buf.getvalue()
