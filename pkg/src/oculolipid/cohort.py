"""Parsing, validation and merging of the fundus, lipid and demographic tables.

CSV conventions: comma separated, UTF-8, header row, ``NA`` or an empty
cell means missing.  ``sex`` is coded Male=0, Female=1 internally; ``M``,
``F``, ``0`` and ``1`` are accepted on input.
"""

import json
import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DuplicateParticipant, EmptyJoin, MissingColumn, NoLipidColumns
from .morphometry import FEATURE_NAMES

log = logging.getLogger(__name__)

DEMOGRAPHICS = ("participant_id", "age", "sex")
MISSING_TOKENS = ("", "NA")
SEX_CODES = {"m": 0.0, "male": 0.0, "0": 0.0, "f": 1.0, "female": 1.0, "1": 1.0}
SEX_LABELS = {0.0: "M", 1.0: "F"}

LIPID_SUBCLASSES = (
    "tag", "dag", "cer", "pc", "pe", "ps", "pg", "pi", "sm", "lysopc", "lysope",
    "glccer", "laccer", "fa", "acca", "gsl",
)
SPECIAL_LIPIDS = {"coenzyme_q10": "coenzyme_q10", "22:6_cholesteryl_ester": "cholesteryl_ester"}
_LIPID_RE = re.compile(r"^(%s)_\S+$" % "|".join(sorted(LIPID_SUBCLASSES, key=len, reverse=True)),
                       re.IGNORECASE)


def lipid_subclass(name):
    """Subclass tag of a lipid column name, or ``None`` if unrecognised."""
    key = name.strip().lower()
    if key in SPECIAL_LIPIDS:
        return SPECIAL_LIPIDS[key]
    m = _LIPID_RE.match(key)
    return m.group(1) if m else None


@dataclass
class FundusFeatureTable:
    frame: pd.DataFrame
    rejected: list = field(default_factory=list)

    @property
    def feature_names(self):
        return list(FEATURE_NAMES)

    def __len__(self):
        return len(self.frame)


@dataclass
class LipidTable:
    frame: pd.DataFrame
    lipid_names: list
    unknown_prefix: list = field(default_factory=list)
    rejected: list = field(default_factory=list)

    @property
    def feature_names(self):
        return list(self.lipid_names)

    @property
    def warning_count(self):
        return len(self.unknown_prefix)

    def __len__(self):
        return len(self.frame)


@dataclass
class MergedCohort:
    frame: pd.DataFrame
    fundus_features: list
    lipid_features: list
    provenance: dict
    rejected: list = field(default_factory=list)

    def __len__(self):
        return len(self.frame)

    @property
    def participant_ids(self):
        return list(self.frame["participant_id"])

    def column(self, name):
        return self.frame[name].to_numpy(dtype=np.float64)

    def sidecar(self):
        return {
            "provenance": dict(self.provenance),
            "rejected": [{"participant_id": pid, "reason": why} for pid, why in self.rejected],
            "sex_encoding": {"M": 0, "F": 1},
            "fundus_features": list(self.fundus_features),
            "lipid_features": list(self.lipid_features),
        }


# ---------------------------------------------------------------------------
# parsing


def _read_raw(path):
    return pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")


def _is_missing(cell):
    return cell.strip() in MISSING_TOKENS


def _to_float(cell):
    cell = cell.strip()
    if cell in MISSING_TOKENS:
        return math.nan
    return float(cell)


def _parse_sex(cell):
    cell = cell.strip()
    if cell in MISSING_TOKENS:
        return math.nan
    try:
        return SEX_CODES[cell.lower()]
    except KeyError:
        raise ValueError(f"unrecognised sex value {cell!r}") from None


def _locate(columns, wanted, required=True):
    lookup = {c.strip().lower(): c for c in columns}
    found = lookup.get(wanted.lower())
    if found is None and required:
        raise MissingColumn(wanted)
    return found


def _parse_rows(raw, source_cols, out_names, demographics):
    """Convert string cells to floats; rows with bad cells are rejected."""
    pid_col = source_cols["participant_id"]
    records, rejected, seen = [], [], set()
    for idx, row in raw.iterrows():
        pid = row[pid_col].strip()
        if not pid:
            rejected.append((f"row {idx + 2}", "empty participant_id"))
            continue
        if pid in seen:
            raise DuplicateParticipant(pid)
        seen.add(pid)
        rec = {"participant_id": pid}
        try:
            if demographics.get("age"):
                age = _to_float(row[demographics["age"]])
                if not math.isnan(age) and not 0 < age < 120:
                    raise ValueError(f"age {age} outside (0, 120)")
                rec["age"] = age
            if demographics.get("sex"):
                rec["sex"] = _parse_sex(row[demographics["sex"]])
            for name in out_names:
                cell = row[source_cols[name]]
                try:
                    rec[name] = _to_float(cell)
                except ValueError:
                    raise ValueError(f"non-numeric value {cell!r} in {name}") from None
                if math.isinf(rec[name]):
                    raise ValueError(f"non-finite value in {name}")
        except ValueError as exc:
            rejected.append((pid, str(exc)))
            continue
        records.append(rec)
    cols = ["participant_id"] + [k for k in ("age", "sex") if demographics.get(k)] + list(out_names)
    frame = pd.DataFrame.from_records(records, columns=cols)
    for c in cols[1:]:
        frame[c] = frame[c].astype(np.float64)
    return frame, rejected


def parse_fundus_csv(path):
    """Read a per-participant fundus feature CSV.

    The 18 canonical feature columns are located case-insensitively.
    ``age`` and ``sex`` are optional (tables written by ``extract`` carry
    none); when absent the lipid table supplies demographics at merge time.
    """
    raw = _read_raw(path)
    source = {"participant_id": _locate(raw.columns, "participant_id")}
    for name in FEATURE_NAMES:
        source[name] = _locate(raw.columns, name)
    demo = {k: _locate(raw.columns, k, required=False) for k in ("age", "sex")}
    frame, rejected = _parse_rows(raw, source, FEATURE_NAMES, demo)
    for pid, why in rejected:
        log.warning("fundus row %s rejected: %s", pid, why)
    return FundusFeatureTable(frame, rejected)


def parse_lipid_csv(path, log10=False):
    """Read a lipid intensity CSV; every non-demographic column is a lipid.

    Values are taken as already log10-transformed unless ``log10`` is set,
    in which case raw intensities are transformed (non-positive values
    become missing).
    """
    raw = _read_raw(path)
    source = {"participant_id": _locate(raw.columns, "participant_id")}
    demo = {k: _locate(raw.columns, k, required=False) for k in ("age", "sex")}
    taken = {c for c in (source["participant_id"], demo["age"], demo["sex"]) if c}
    lipid_cols = [c for c in raw.columns if c not in taken]
    if not lipid_cols:
        raise NoLipidColumns(f"{path}: no lipid columns")
    names = [c.strip() for c in lipid_cols]
    source.update(dict(zip(names, lipid_cols)))
    unknown = [n for n in names if lipid_subclass(n) is None]
    if unknown:
        log.warning("%d lipid columns with unrecognised subclass prefix", len(unknown))
    frame, rejected = _parse_rows(raw, source, names, demo)
    if log10:
        vals = frame[names].to_numpy()
        with np.errstate(divide="ignore", invalid="ignore"):
            frame[names] = np.where(vals > 0, np.log10(vals), np.nan)
    return LipidTable(frame, names, unknown, rejected)


# ---------------------------------------------------------------------------
# merge


def _demo_value(a, b, name):
    if name not in a.index or (isinstance(a[name], float) and math.isnan(a[name])):
        return b.get(name, math.nan)
    return a[name]


def merge_cohort(fundus, lipids, age_tolerance=1.0):
    """Inner join on participant_id with age/sex consistency checks.

    Rows whose ages differ by more than ``age_tolerance`` years, or whose sex
    codes differ, are rejected with a reason.  Demographics come from the
    first table when present there, otherwise from the second.  Rows are
    sorted by participant_id.
    """
    left, right = fundus.frame, lipids.frame
    if len(left) == 0 or len(right) == 0:
        raise EmptyJoin("cannot merge an empty table")
    lids, rids = set(left["participant_id"]), set(right["participant_id"])
    common = sorted(lids & rids)
    if not common:
        raise EmptyJoin("no participant_id shared between the tables")
    lx = left.set_index("participant_id")
    rx = right.set_index("participant_id")
    lfeat, rfeat = list(fundus.feature_names), list(lipids.feature_names)
    rows, rejected = [], []
    for pid in common:
        a, b = lx.loc[pid], rx.loc[pid]
        reason = None
        if "age" in a.index and "age" in b.index:
            if not (math.isnan(a["age"]) or math.isnan(b["age"])) and abs(a["age"] - b["age"]) > age_tolerance:
                reason = f"age mismatch {a['age']:g} vs {b['age']:g}"
        if reason is None and "sex" in a.index and "sex" in b.index:
            if not (math.isnan(a["sex"]) or math.isnan(b["sex"])) and a["sex"] != b["sex"]:
                reason = "sex mismatch"
        if reason:
            rejected.append((pid, reason))
            continue
        rec = {"participant_id": pid,
               "age": _demo_value(a, b, "age"),
               "sex": _demo_value(a, b, "sex")}
        rec.update({k: a[k] for k in lfeat})
        rec.update({k: b[k] for k in rfeat})
        rows.append(rec)
    if not rows:
        raise EmptyJoin("every shared participant was rejected")
    frame = pd.DataFrame.from_records(rows, columns=["participant_id", "age", "sex"] + lfeat + rfeat)
    for c in frame.columns[1:]:
        frame[c] = frame[c].astype(np.float64)
    provenance = {
        "n_fundus_only": len(lids - rids),
        "n_lipid_only": len(rids - lids),
        "n_joined": len(rows),
        "n_rejected": len(rejected),
    }
    return MergedCohort(frame, lfeat, rfeat, provenance, rejected)


# ---------------------------------------------------------------------------
# emit / summaries


def write_table(frame, path):
    out = frame.copy()
    if "sex" in out.columns:
        out["sex"] = out["sex"].map(SEX_LABELS)
    out.to_csv(path, index=False, na_rep="NA", lineterminator="\n")


def write_cohort(cohort, csv_path, json_path):
    write_table(cohort.frame, csv_path)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(cohort.sidecar(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_cohort(csv_path, json_path):
    with open(json_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    raw = _read_raw(csv_path)
    names = meta["fundus_features"] + meta["lipid_features"]
    source = {"participant_id": "participant_id", **{n: n for n in names}}
    frame, _ = _parse_rows(raw, source, names, {"age": "age", "sex": "sex"})
    rejected = [(r["participant_id"], r["reason"]) for r in meta["rejected"]]
    return MergedCohort(frame, meta["fundus_features"], meta["lipid_features"],
                        meta["provenance"], rejected)


STRATA = (("Male", 0.0), ("Female", 1.0), ("All", None))


def summarize(frame, columns=None, sex_column="sex"):
    """Mean, sample SD and count per column for Male, Female and All.

    Missing values are excluded per column; SD is NaN when fewer than two
    values remain.  Returns a long frame with columns
    ``column, stratum, mean, sd, n``.
    """
    if columns is None:
        columns = [c for c in frame.columns
                   if c not in ("participant_id", sex_column) and pd.api.types.is_numeric_dtype(frame[c])]
    sex = frame[sex_column].to_numpy(dtype=np.float64) if sex_column in frame else None
    rows = []
    for col in columns:
        values = frame[col].to_numpy(dtype=np.float64)
        for stratum, code in STRATA:
            if code is None:
                v = values
            elif sex is None:
                continue
            else:
                v = values[sex == code]
            v = v[~np.isnan(v)]
            n = len(v)
            mean = float(np.mean(v)) if n else math.nan
            sd = float(np.std(v, ddof=1)) if n > 1 else math.nan
            rows.append({"column": col, "stratum": stratum, "mean": mean, "sd": sd, "n": n})
    return pd.DataFrame(rows, columns=["column", "stratum", "mean", "sd", "n"])


def summary_table(frame, columns=None):
    """Summary-table layout: one row per column, ``mean ± SD`` cells per stratum."""
    long = summarize(frame, columns)
    out = []
    for col, grp in long.groupby("column", sort=False):
        row = {"characteristic": col}
        for _, r in grp.iterrows():
            key = r["stratum"].lower()
            row[f"{key}_mean"] = r["mean"]
            row[f"{key}_sd"] = r["sd"]
            row[f"{key}_n"] = int(r["n"])
        out.append(row)
    return pd.DataFrame(out)
