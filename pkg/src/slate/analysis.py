"""Complexity accounting and evaluation reports.

Two independent parameter counts are kept side by side: a closed-form
count derived from the configuration alone, and a structural count that
walks the parameters a built model actually carries.  The closed-form
route answers "what does this architecture cost on paper", the
structural route answers "what did we build", and the reconciliation
delta between them is the honesty check.  The two are close but not
identical; the closed-form expressions fold attention and state
projections into a single per-layer term and ignore small tables such
as the relative position bias.

FLOP totals are reported under both multiply-accumulate conventions
(one MAC counted as one flop, or as two).  Elementwise work is counted
once with small fixed per-op costs and added identically to both
totals, so any reasonable counting lands inside the [mac1, mac2]
bracket.  Elementwise costs used: layer norm 8 ops/element, softmax 7
ops/logit (scale, shift, exp, sum, divide, bias and mask adds),
sigmoid/tanh 4 ops/element, leaky relu 1 op/element, adds/muls 1.
"""

import json
import os

import numpy as np

from . import quantize, training
from .errors import ConfigError


# ---------------------------------------------------------------------------
# analytic parameter count


def _dec_channel_factors(cfg):
    """Channel multiplier (over edim) at each decoder cell, first stage deepest."""
    return [c // cfg.edim for _, _, c in cfg.decoder_grids()]


def analytic_params(cfg):
    """Closed-form per-layer parameter counts.

    Returns an ordered list of {name, formula, count} rows.  The formula
    strings use E for the embedding width, L for the latent width, a_r
    for per-stage depth, D_r for the cumulative encoder channel factor
    prod(d[:r]), U_r for the decoder channel factor at stage r (the
    mirror of D), and F for the flattened bottleneck width.
    """
    e = cfg.edim
    l_dim = cfg.l_dim
    flat = cfg.flat_dim
    rows = []

    rows.append({
        "name": "enc.embed",
        "formula": "(2*Ph*Pw + 3)*E",
        "count": (2 * cfg.ph * cfg.pw + 3) * e,
    })

    d_prev = 1
    cum = 1
    for r, dr in enumerate(cfg.d, start=1):
        cum *= dr
        rows.append({
            "name": f"enc.merge{r}",
            "formula": "4*d_r*d_(r-1)^2*E^2 + 8*E",
            "count": 4 * dr * d_prev * d_prev * e * e + 8 * e,
        })
        a = cfg.alpha[r - 1]
        rows.append({
            "name": f"enc.cell{r}",
            "formula": "14*a_r*D_r^2*E^2 + 14*a_r*D_r*E",
            "count": 14 * a * cum * cum * e * e + 14 * a * cum * e,
        })
        d_prev = dr

    rows.append({
        "name": "enc.head",
        "formula": "(2 + L)*F + L",
        "count": (2 + l_dim) * flat + l_dim,
    })
    rows.append({
        "name": "dec.head",
        "formula": "(1 + L)*F + 2*L",
        "count": (1 + l_dim) * flat + 2 * l_dim,
    })

    factors = _dec_channel_factors(cfg)
    alpha_rev = tuple(reversed(cfg.alpha))
    for r, f in enumerate(factors, start=1):
        a = alpha_rev[r - 1]
        rows.append({
            "name": f"dec.cell{r}",
            "formula": "14*a_r*U_r^2*E^2 + 14*a_r*U_r*E",
            "count": 14 * a * f * f * e * e + 14 * a * f * e,
        })
        rows.append({
            "name": f"dec.expand{r}",
            "formula": "2*U_r^2*E^2 + U_r*E",
            "count": 2 * f * f * e * e + f * e,
        })

    rows.append({
        "name": "dec.extract",
        "formula": "2*(Ph*Pw*E + 1)",
        "count": 2 * (cfg.ph * cfg.pw * e + 1),
    })
    return rows


def analytic_total(cfg):
    return sum(r["count"] for r in analytic_params(cfg))


# ---------------------------------------------------------------------------
# structural parameter count


def _group_key(name):
    parts = name.split(".")
    side = parts[0]
    if parts[1].startswith("stages"):
        r = int(parts[1][len("stages"):]) + 1
        kind = parts[2]
        return f"{side}.{kind}{r}"
    if parts[1].startswith("head"):
        return f"{side}.head"
    return f"{side}.{parts[1]}"


def structural_params(model):
    """Per-layer-group parameter counts from the built model, dotted-name keyed."""
    groups = {}
    for name, p in model.named_params():
        key = _group_key(name)
        groups[key] = groups.get(key, 0) + p.data.size
    return groups


def reconcile(model):
    """Line up analytic and structural counts; returns rows plus totals.

    Row deltas are relative to the structural count for that group.  The
    headline deltaPct compares grand totals.
    """
    rows = []
    structural = structural_params(model)
    seen = set()
    for arow in analytic_params(model.cfg):
        name = arow["name"]
        s = structural.get(name, 0)
        seen.add(name)
        delta = abs(arow["count"] - s) / s * 100.0 if s else float("nan")
        rows.append({
            "name": name,
            "formula": arow["formula"],
            "analytic": arow["count"],
            "structural": s,
            "deltaPct": delta,
        })
    extra = set(structural) - seen
    if extra:
        raise ConfigError(f"structural groups without analytic rows: {sorted(extra)}")
    a_total = sum(r["analytic"] for r in rows)
    s_total = sum(r["structural"] for r in rows)
    return {
        "rows": rows,
        "analyticTotal": a_total,
        "structuralTotal": s_total,
        "deltaPct": abs(a_total - s_total) / s_total * 100.0,
    }


# ---------------------------------------------------------------------------
# flop estimate


def _swin_layer_flops(tokens, ch, win_tokens, heads):
    # MACs: state inject 2TC^2, qkv 3TC^2, proj TC^2, mlp 8TC^2,
    # attention scores + apply 2*T*w*C.
    macs = 14 * tokens * ch * ch + 2 * tokens * win_tokens * ch
    # elementwise: 2 layer norms (16TC), biases (10TC), residuals (2TC),
    # mlp leaky relu (4TC), softmax and additive bias/mask (7 per logit).
    other = 32 * tokens * ch + 7 * tokens * heads * win_tokens
    return macs, other


def _cell_flops(tokens, ch, n_layers, win_tokens, heads):
    macs = other = 0
    for _ in range(n_layers):
        m, o = _swin_layer_flops(tokens, ch, win_tokens, heads)
        macs += m
        other += o
    # gate update: sigmoid + 2 tanh + 2 mul + 1 add over TC elements.
    other += 15 * tokens * ch
    return macs, other


def flop_estimate(cfg, rank=1):
    """Analytic op count for one encode step plus one decode step.

    Returns macs and elementwise op totals plus the two bracketing
    conventions: flopsMac1 = macs + other, flopsMac2 = 2*macs + other.
    Everything scales linearly with the transmitted rank.
    """
    win = cfg.window[0] * cfg.window[1]
    gh, gw = cfg.grid
    e = cfg.edim
    breakdown = []

    def add(name, macs, other):
        breakdown.append({"name": name, "macs": macs, "other": other})

    t0 = gh * gw
    add("enc.embed", t0 * (2 * cfg.ph * cfg.pw) * e, 10 * t0 * e)

    h, w, c_prev = gh, gw, e
    for r, (dr, (sh, sw, c)) in enumerate(zip(cfg.d, cfg.encoder_grids()), start=1):
        t = sh * sw
        c_in = dr * dr * c_prev
        add(f"enc.merge{r}", t * c_in * c, 8 * t * c_in)
        macs, other = _cell_flops(t, c, cfg.alpha[r - 1], win, cfg.heads[r - 1])
        add(f"enc.cell{r}", macs, other)
        h, w, c_prev = sh, sw, c

    flat = cfg.flat_dim
    l_dim = cfg.l_dim
    # head: layer norm over flat, linear to L, tanh, then quantize/dequantize.
    add("enc.head", flat * l_dim, 8 * flat + 5 * l_dim + 6 * l_dim)
    add("dec.head", l_dim * flat, 8 * l_dim + flat)

    heads_rev = tuple(reversed(cfg.heads))
    alpha_rev = tuple(reversed(cfg.alpha))
    for r, (ur, (sh, sw, c)) in enumerate(zip(cfg.u, cfg.decoder_grids()), start=1):
        t = sh * sw
        macs, other = _cell_flops(t, c, alpha_rev[r - 1], win, heads_rev[r - 1])
        add(f"dec.cell{r}", macs, other)
        add(f"dec.expand{r}", t * c * (ur * ur * (c // ur)), 0)

    t_out = gh * gw
    add("dec.extract", t_out * e * 2 * cfg.ph * cfg.pw, 2 * t_out * cfg.ph * cfg.pw)

    macs = rank * sum(b["macs"] for b in breakdown)
    other = rank * sum(b["other"] for b in breakdown)
    return {
        "macs": macs,
        "other": other,
        "flopsMac1": macs + other,
        "flopsMac2": 2 * macs + other,
        "rank": rank,
        "breakdown": breakdown,
    }


def payload_overhead(l_dim, rank, qcfg=quantize.QuantizerConfig()):
    """Feedback payload in bits for one report: b * L * rank."""
    return quantize.payload_bits(l_dim, rank, qcfg)


# ---------------------------------------------------------------------------
# evaluation reports


def evaluate_model(model, dataset, batch=64, ablate_state=False,
                   qcfg=quantize.QuantizerConfig()):
    """Scorecard for a model on a dataset: accuracy plus cost columns.

    meanSGCS / p5SGCS are over per-sequence hard-quantized SGCS values.
    With ablate_state the model is additionally scored with states reset
    at every step, reported as ablatedSGCS.
    """
    vals = training.sgcs_per_sequence(model, dataset.v, batch=batch, mode="hard")
    flops = flop_estimate(model.cfg, rank=dataset.rank)
    report = {
        "lDim": model.cfg.l_dim,
        "bits": payload_overhead(model.cfg.l_dim, dataset.rank, qcfg),
        "meanSGCS": float(np.mean(vals)),
        "p5SGCS": float(np.percentile(vals, 5.0)),
        "params": model.param_count(),
        "flopsMac1": flops["flopsMac1"],
        "flopsMac2": flops["flopsMac2"],
    }
    if ablate_state:
        ab = training.sgcs_per_sequence(model, dataset.v, batch=batch, mode="hard",
                                        zero_state=True)
        report["ablatedSGCS"] = float(np.mean(ab))
    return report


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def report_table(rows, columns=None):
    """Plain-text aligned table from a list of dict rows."""
    if not rows:
        return ""
    if columns is None:
        columns = list(rows[0].keys())
    cells = [[_fmt(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(c), max(len(cr[i]) for cr in cells)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    for cr in cells:
        lines.append("  ".join(c.rjust(w) for c, w in zip(cr, widths)))
    return "\n".join(lines)


def write_report(path, rows):
    """One JSON record per line, written atomically."""
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        for r in rows:
            f.write(json.dumps(r, sort_keys=True) + "\n")
    os.replace(tmp, path)


def read_report(path):
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]
