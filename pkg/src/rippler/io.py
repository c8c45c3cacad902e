"""CSV and manifest serialisation.

All tabular output is CSV with a header row. Matrices (latent states,
observations, uniform grids) serialise cell-per-row as `t,j,value` with
1-based time and individual indices and missing values written as empty
fields. Floats are written with `repr`, the shortest digit string that
round-trips, so identical runs produce identical bytes.

The run manifest is a JSON object holding the resolved config, its
hash, and the master seed; it carries no timestamps, so reruns of the
same config and seed are byte-identical.
"""

import csv
import hashlib
import json
import math

import numpy as np

from .chmm import RipplerError

TRACE_COLUMNS = ("iteration", "update_index", "kappa", "accepted",
                 "ripple_size", "log_ratio")


def _fmt(value):
    """Deterministic scalar formatting; None and NaN become empty."""
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return ""
        return repr(float(value))
    return str(value)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_matrix_csv(path, matrix):
    """Write a (T, N) matrix as `t,j,value` rows in time-major order.
    Integer matrices keep integer formatting; NaN cells are empty."""
    m = np.asarray(matrix)
    T, N = m.shape
    integral = np.issubdtype(m.dtype, np.integer)
    rows = ((t + 1, j + 1, int(m[t, j]) if integral else float(m[t, j]))
            for t in range(T) for j in range(N))
    _write_rows(path, ("t", "j", "value"), rows)


def read_matrix_csv(path, dtype=float):
    """Read a `t,j,value` file back into a (T, N) array. Empty values
    become NaN, which requires a float dtype."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["t", "j", "value"]:
            raise RipplerError(f"{path}: expected header t,j,value, got {header}")
        cells = [(int(t), int(j), v) for t, j, v in reader]
    if not cells:
        raise RipplerError(f"{path}: no data rows")
    T = max(t for t, _, _ in cells)
    N = max(j for _, j, _ in cells)
    if len(cells) != T * N:
        raise RipplerError(f"{path}: expected {T * N} cells, got {len(cells)}")
    out = np.full((T, N), np.nan)
    for t, j, v in cells:
        out[t - 1, j - 1] = float(v) if v != "" else np.nan
    if np.issubdtype(np.dtype(dtype), np.integer):
        if np.isnan(out).any():
            raise RipplerError(f"{path}: missing cells in an integer matrix")
        return out.astype(dtype)
    return out.astype(dtype)


def write_trace_csv(path, trace, iterations, latent_updates):
    """Write a per-update trace under the shared schema
    iteration,update_index,kappa,accepted,ripple_size,log_ratio.
    Kernels without a given field leave its column empty, except that
    always-accepted refreshes record accepted=1 and log_ratio=0.0.
    Both indices are 1-based; update_index counts within an iteration.
    """
    total = iterations * latent_updates
    kappa = trace.get("kappa")
    accepted = trace.get("accepted")
    ripple = trace.get("ripple_size")
    log_ratio = trace.get("log_ratio")
    if ripple is not None and len(ripple) != total:
        raise RipplerError("trace length does not match iterations * updates")

    def rows():
        for u in range(total):
            yield (u // latent_updates + 1,
                   u % latent_updates + 1,
                   None if kappa is None else int(kappa[u]),
                   1 if accepted is None else int(accepted[u]),
                   None if ripple is None else int(ripple[u]),
                   0.0 if log_ratio is None else float(log_ratio[u]))

    _write_rows(path, TRACE_COLUMNS, rows())


def read_trace_csv(path):
    """Read a trace CSV into a dict of arrays (NaN/-1 for empties)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(TRACE_COLUMNS):
            raise RipplerError(f"{path}: unexpected trace header")
        recs = list(reader)
    out = {}
    for col in TRACE_COLUMNS:
        vals = [r[col] for r in recs]
        if col == "log_ratio":
            out[col] = np.array([float(v) if v != "" else np.nan for v in vals])
        else:
            out[col] = np.array([int(v) if v != "" else -1 for v in vals],
                                np.int64)
    return out


def write_state_counts_csv(path, counts):
    """Write a (K, T, S) per-iteration occupancy stack as
    iteration,t,state,count rows (all indices 1-based)."""
    c = np.asarray(counts)
    K, T, S = c.shape
    rows = ((k + 1, t + 1, s + 1, int(c[k, t, s]))
            for k in range(K) for t in range(T) for s in range(S))
    _write_rows(path, ("iteration", "t", "state", "count"), rows)


def write_intervals_csv(path, intervals):
    """Write a (T, S, 3) median/lower/upper array as
    t,state,median,lo,hi rows."""
    iv = np.asarray(intervals, float)
    T, S, _ = iv.shape
    rows = ((t + 1, s + 1, iv[t, s, 0], iv[t, s, 1], iv[t, s, 2])
            for t in range(T) for s in range(S))
    _write_rows(path, ("t", "state", "median", "lo", "hi"), rows)


def write_majd_csv(path, rows):
    """Write scaling/mixing summary rows with the columns
    kernel,S,majd,seconds,relative_time."""
    header = ("kernel", "S", "majd", "seconds", "relative_time")
    _write_rows(path, header,
                ((r["kernel"], r["S"], r["majd"], r["seconds"],
                  r["relative_time"]) for r in rows))


def read_majd_csv(path):
    with open(path, newline="") as fh:
        recs = list(csv.DictReader(fh))
    return [dict(kernel=r["kernel"], S=int(r["S"]), majd=float(r["majd"]),
                 seconds=float(r["seconds"]),
                 relative_time=float(r["relative_time"])) for r in recs]


def write_acceptance_csv(path, table):
    """Write the per-move-size acceptance table from
    diagnostics.acceptance_by_kappa."""
    header = ("kappa", "proposals", "accepts", "rate",
              "exploit_proposals", "exploit_accepts", "exploit_rate")
    ks = table["kappa"]
    rows = ((int(ks[i]), int(table["proposals"][i]), int(table["accepts"][i]),
             float(table["rate"][i]), int(table["exploit_proposals"][i]),
             int(table["exploit_accepts"][i]), float(table["exploit_rate"][i]))
            for i in range(len(ks)))
    _write_rows(path, header, rows)


def write_ripple_histogram_csv(path, ripple_sizes):
    """Histogram the per-update ripple sizes into ripple_size,count."""
    sizes = np.asarray(ripple_sizes, np.int64)
    if sizes.size:
        counts = np.bincount(sizes)
        rows = [(s, int(c)) for s, c in enumerate(counts) if c > 0]
    else:
        rows = []
    _write_rows(path, ("ripple_size", "count"), rows)


def write_enumeration_csv(path, probs):
    """Write an enumerated posterior as config_id,probability."""
    p = np.asarray(probs, float)
    _write_rows(path, ("config_id", "probability"),
                ((cid, p[cid]) for cid in range(p.size)))


def read_enumeration_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["config_id", "probability"]:
            raise RipplerError(f"{path}: expected config_id,probability")
        recs = [(int(cid), float(prob)) for cid, prob in reader]
    out = np.zeros(max(cid for cid, _ in recs) + 1)
    for cid, prob in recs:
        out[cid] = prob
    return out


def write_oracle_report_csv(path, rows):
    """Write per-kernel oracle comparisons as kernel,updates,tv rows."""
    _write_rows(path, ("kernel", "updates", "tv"),
                ((r["kernel"], r["updates"], r["tv"]) for r in rows))


def config_hash(config_dict):
    """Stable hash of a resolved config dict."""
    canon = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def write_manifest(path, config_dict, seed, command, outputs):
    """Record what produced a directory of outputs: the resolved
    config, its hash, the master seed, the subcommand, and the file
    list. Deliberately no timestamps, so reruns are byte-identical."""
    doc = dict(command=command, seed=int(seed),
               config_sha256=config_hash(config_dict),
               config=config_dict, outputs=sorted(outputs))
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path):
    with open(path) as fh:
        return json.load(fh)
