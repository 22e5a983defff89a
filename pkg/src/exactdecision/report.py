"""Report documents and file emission (CSV, JSON, SVG).

Every number goes out twice: a rounded decimal for reading and the exact
numerator/denominator pair it was rounded from.
"""

from __future__ import annotations

import csv
import io
import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence
from xml.sax.saxutils import escape

from .combinatorics import enumerate_strata
from .criteria import CRITERIA, SweepRow
from .likelihood import (
    PosteriorError,
    ExactProbability,
    fisher_exact_p,
    likelihood,
    mle_set,
    positive_support_count,
    posterior,
    top_likelihoods,
)
from .records import RunConfig, TrialRecord
from .rules import (
    RULE_NAMES,
    UnknownRuleError,
    frechet_interval,
    frechet_minima,
    frechet_threshold,
    make_rule,
)

STRATUM_NAMES = ("live_regardless", "efficacious", "unsafe", "die_regardless")


def render_decimal(value, digits: int = 3) -> str:
    """Round an exact value half-to-even at ``digits`` places."""
    f = value.value if isinstance(value, ExactProbability) else Fraction(value)
    q = round(f * 10**digits)  # Fraction rounding is exact and half-to-even
    sign = "-" if q < 0 else ""
    s = str(abs(q)).rjust(digits + 1, "0")
    if digits == 0:
        return sign + s
    return f"{sign}{s[:-digits]}.{s[-digits:]}"


def number(value, digits: int = 3) -> dict[str, Any]:
    f = value.value if isinstance(value, ExactProbability) else Fraction(value)
    return {"value_decimal": render_decimal(f, digits), "value_num": f.numerator, "value_den": f.denominator}


def _posterior_means(x, design, prior, digits: int) -> dict[str, Any] | None:
    """Posterior means by stratum, or None when the prior rules out the data."""
    try:
        means = posterior(x, design, prior).means
    except PosteriorError:
        return None
    return {name: number(v, digits) for name, v in zip(STRATUM_NAMES, means)}


def analyze(trial: TrialRecord, config: RunConfig) -> dict[str, Any]:
    trial.validate()
    design, x, d = trial.design, trial.outcome, config.digits
    prior = config.prior_for(design)
    spec = config.spec
    return {
        "trial": {k: getattr(trial, k) for k in ("n", "m", "x_I1", "x_I0", "x_C1", "x_C0", "label")},
        "strata_candidates": len(enumerate_strata(design)),
        "positive_support": positive_support_count(x, design),
        "mle": [
            {"theta": list(t), "likelihood": number(likelihood(t, x, design), d)}
            for t in mle_set(x, design)
        ],
        "top_likelihoods": [
            {"theta": list(t), "likelihood": number(p, d)}
            for t, p in top_likelihoods(x, design, config.top_k)
        ],
        "posterior_means": _posterior_means(x, design, prior, d),
        "fisher_p": number(fisher_exact_p(x, design), d),
        "rules": {name: number(make_rule(name, design, spec, prior)(x), d) for name in RULE_NAMES},
    }


def explain(rule: str, trial: TrialRecord, config: RunConfig) -> dict[str, Any]:
    """A rule's action probability plus the quantities that drove it."""
    if rule not in RULE_NAMES:
        raise UnknownRuleError(rule)
    trial.validate()
    design, x, d = trial.design, trial.outcome, config.digits
    prior = config.prior_for(design)
    spec = config.spec
    why: dict[str, Any]
    if rule == "ml":
        why = {
            "mle": [
                {"theta": list(t), "likelihood": number(likelihood(t, x, design), d)}
                for t in mle_set(x, design)
            ]
        }
    elif rule == "bayes":
        why = {"posterior_means": _posterior_means(x, design, prior, d)}
        if why["posterior_means"] is None:
            why["note"] = "no stratum has positive prior mass and likelihood; the rule is indifferent"
    elif rule == "es":
        iv = frechet_interval(x, design)
        why = {"p_I_hat": number(iv.p_I_hat, d), "p_C_hat": number(iv.p_C_hat, d), "effect": number(iv.effect, d)}
    elif rule == "frechet":
        iv = frechet_interval(x, design)
        worst_act, worst_inact = frechet_minima(x, design, spec)
        why = {
            "p_I_hat": number(iv.p_I_hat, d),
            "p_C_hat": number(iv.p_C_hat, d),
            "effect": number(iv.effect, d),
            "threshold": number(frechet_threshold(x, design), d),
            "unsafe_share_interval": [number(iv.lower, d), number(iv.upper, d)],
            "worst_case_action": number(worst_act, d),
            "worst_case_inaction": number(worst_inact, d),
        }
    else:
        why = {"note": "ignores the data"}
    return {
        "rule": rule,
        "action_probability": number(make_rule(rule, design, spec, prior)(x), d),
        "explanation": why,
    }


def to_json(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _csv(rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


NUMBER_COLUMNS = ("value_decimal", "value_num", "value_den")


def _num_cells(obj: dict[str, Any]) -> list[Any]:
    return [obj[k] for k in NUMBER_COLUMNS]


def analyze_csv(doc: dict[str, Any]) -> str:
    """Flatten an analyze document to ``section,key,value_decimal,value_num,value_den``."""
    rows: list[list[Any]] = [["section", "key", *NUMBER_COLUMNS]]
    for k in ("strata_candidates", "positive_support"):
        rows.append(["count", k, str(doc[k]), doc[k], 1])
    for entry in doc["mle"]:
        rows.append(["mle", " ".join(map(str, entry["theta"])), *_num_cells(entry["likelihood"])])
    for entry in doc["top_likelihoods"]:
        rows.append(["top_likelihood", " ".join(map(str, entry["theta"])), *_num_cells(entry["likelihood"])])
    for k, v in (doc["posterior_means"] or {}).items():
        rows.append(["posterior_mean", k, *_num_cells(v)])
    rows.append(["fisher", "p_one_sided", *_num_cells(doc["fisher_p"])])
    for k, v in doc["rules"].items():
        rows.append(["rule", k, *_num_cells(v)])
    return _csv(rows)


def decide_csv(doc: dict[str, Any]) -> str:
    rows: list[list[Any]] = [["rule", "key", *NUMBER_COLUMNS]]
    rows.append([doc["rule"], "action_probability", *_num_cells(doc["action_probability"])])
    for k, v in doc["explanation"].items():
        if v is None:
            rows.append([doc["rule"], k, "", "", ""])
        elif isinstance(v, dict) and "value_num" in v:
            rows.append([doc["rule"], k, *_num_cells(v)])
        elif isinstance(v, dict):
            for kk, vv in v.items():
                rows.append([doc["rule"], f"{k}.{kk}", *_num_cells(vv)])
        elif isinstance(v, list):
            for i, item in enumerate(v):
                if "theta" in item:
                    rows.append([doc["rule"], f"{k}.{' '.join(map(str, item['theta']))}", *_num_cells(item["likelihood"])])
                else:
                    rows.append([doc["rule"], f"{k}.{i}", *_num_cells(item)])
        else:
            rows.append([doc["rule"], k, v, "", ""])
    return _csv(rows)


# -- sweep tables ---------------------------------------------------------------

SWEEP_COLUMNS = ("n", "m", "rule", *NUMBER_COLUMNS)


def sweep_table(rows: Sequence[SweepRow], criterion: str, digits: int = 3) -> list[dict[str, Any]]:
    return [
        {"n": r.n, "m": r.m, "rule": r.rule, **number(r.value, digits)}
        for r in rows
        if r.criterion == criterion
    ]


def sweep_csv(table: Sequence[dict[str, Any]]) -> str:
    return _csv([SWEEP_COLUMNS, *([row[c] for c in SWEEP_COLUMNS] for row in table)])


def write_sweep(
    rows: Sequence[SweepRow],
    out_dir: str | Path,
    fmt: str = "csv",
    digits: int = 3,
    criteria: Sequence[str] = CRITERIA,
    svg_dir: str | Path | None = None,
    svg_rules: Sequence[str] | None = None,
) -> list[Path]:
    """One file per criterion (plus optional charts); returns the paths written."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc.strerror}") from exc
    written = []
    for crit in criteria:
        table = sweep_table(rows, crit, digits)
        if fmt == "csv":
            text = sweep_csv(table)
        else:
            text = to_json({"criterion": crit, "rows": table})
        path = out_dir / f"{crit}.{fmt}"
        _write(path, text)
        written.append(path)
        if svg_dir is not None:
            svg_path = Path(svg_dir) / f"{crit}.svg"
            svg_path.parent.mkdir(parents=True, exist_ok=True)
            chart_rows = [r for r in rows if r.criterion == crit and (svg_rules is None or r.rule in svg_rules)]
            _write(svg_path, svg_chart(chart_rows, CRITERION_TITLES[crit]))
            written.append(svg_path)
    return written


def _write(path: Path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


# -- SVG --------------------------------------------------------------------------

CRITERION_TITLES = {
    "maximin": "Maximin utility",
    "maximin_normalized": "Maximin normalized utility (minimax regret)",
    "bayes": "Expected utility, uniform prior",
    "ml": "Maximum likelihood criterion",
}
RULE_LABELS = {
    "ml": "Maximum likelihood",
    "bayes": "Bayes (uniform prior)",
    "es": "Empirical success",
    "frechet": "Frechet bounds",
    "coinflip": "Coin flip",
}
PALETTE = {"ml": "#1b6ca8", "bayes": "#d1495b", "es": "#8a8a8a", "frechet": "#edae49", "coinflip": "#3b7d4f"}


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


def svg_chart(rows: Sequence[SweepRow], title: str, width: int = 640, height: int = 400) -> str:
    """Line chart of value against n, one series per rule, fixed formatting."""
    left, right, top, bottom = 70, 170, 40, 50
    pw, ph = width - left - right, height - top - bottom
    ns = sorted({r.n for r in rows})
    vals = [float(r.value) for r in rows]
    y_lo, y_hi = (min(vals + [0.0]), max(vals + [0.0])) if vals else (0.0, 1.0)
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    x_lo, x_hi = (ns[0], ns[-1]) if ns else (0, 1)
    if x_hi == x_lo:
        x_hi = x_lo + 1

    def px(n: float) -> float:
        return left + (n - x_lo) / (x_hi - x_lo) * pw

    def py(v: float) -> float:
        return top + (y_hi - v) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for v in _ticks(y_lo, y_hi):
        y = py(v)
        out.append(f'<line x1="{left - 4}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="black"/>')
        out.append(f'<text x="{left - 7}" y="{y + 4:.1f}" text-anchor="end">{v:.3f}</text>')
    for n in ns:
        x = px(n)
        out.append(f'<line x1="{x:.1f}" y1="{top + ph}" x2="{x:.1f}" y2="{top + ph + 4}" stroke="black"/>')
        if len(ns) <= 13 or n % 10 == 0 or n == ns[0]:
            out.append(f'<text x="{x:.1f}" y="{top + ph + 17}" text-anchor="middle">{n}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">sample size n</text>')
    if y_lo < 0 < y_hi:
        out.append(
            f'<line x1="{left}" y1="{py(0):.1f}" x2="{left + pw}" y2="{py(0):.1f}" '
            'stroke="#bbbbbb" stroke-dasharray="4 3"/>'
        )
    rules = [r for r in RULE_NAMES if any(row.rule == r for row in rows)]
    for i, rule in enumerate(rules):
        pts = sorted((row.n, float(row.value)) for row in rows if row.rule == rule)
        color = PALETTE.get(rule, "black")
        path = " ".join(f"{px(n):.1f},{py(v):.1f}" for n, v in pts)
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.8"/>')
        for n, v in pts:
            out.append(f'<circle cx="{px(n):.1f}" cy="{py(v):.1f}" r="2.2" fill="{color}"/>')
        ly = top + 14 + 18 * i
        lx = left + pw + 14
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}">{escape(RULE_LABELS[rule])}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
