"""Command-line verification driver.

Every subcommand runs a seeded check suite and writes a canonical JSON report.
Exit codes: 0 all checks pass, 1 a check failed, 2 usage error, 3 bad
configuration, 4 numerical failure, 5 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import crossview, directed, faircluster, fairmetrics, flows, grassmann
from .errors import ConfigError, InvalidInputError, NumericalFailure, SchemaError
from .linalg import projector_distance
from .synthdata import (
    chain_attention,
    gaussian_mixture,
    imbalanced_label_grid,
    make_rng,
    paired_views,
    permute_grid,
    random_orthogonal,
    random_subspace,
    rotated_subspace_pair,
)

SCHEMA_VERSION = 1
DEFAULT_SEED = 7

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = range(6)


@dataclass
class Check:
    name: str
    passed: bool
    observed: float
    tolerance: float

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "observed": self.observed, "tolerance": self.tolerance}


@dataclass
class RunReport:
    command: str
    config: dict
    metrics: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    wall_time: float | None = None
    verification: bool = True

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config": dict(self.config),
            "metrics": dict(self.metrics),
            "checks": [c.to_dict() for c in self.checks],
            "status": "pass" if self.passed else "fail",
        }
        if self.wall_time is not None:
            out["wall_time"] = self.wall_time
        return out


def _encode(obj, indent: int = 0) -> str:
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_encode(obj[k], indent + 1)}" for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        return "[\n" + ",\n".join(inner + _encode(v, indent + 1) for v in seq) + "\n" + pad + "]"
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return '"nan"'
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    raise SchemaError(f"cannot serialise {type(obj).__name__}")


def render_report(report: RunReport) -> str:
    if report.verification and not report.checks:
        raise SchemaError(f"verification command {report.command!r} produced no checks")
    return _encode(report.to_dict()) + "\n"


def emit_report(report: RunReport, path=None) -> None:
    """Write the canonical report to ``path`` or stdout."""
    text = render_report(report)
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror or exc}") from exc


def _trial_seed(seed, i):
    return np.random.SeedSequence([int(seed), int(i)])


def _le(name, observed, tol):
    return Check(name, bool(observed <= tol), float(observed), float(tol))


# --------------------------------------------------------------------------
# commands; each takes the merged config and returns (metrics, checks)


def run_gfk_verify(cfg):
    dim, sub, trials, tol = cfg["dim"], cfg["sub"], cfg["trials"], cfg["tol"]
    if not 1 <= sub <= dim // 2:
        raise ConfigError(f"need 1 <= sub <= dim/2, got dim={dim}, sub={sub}")
    residuals, endpoints, angle_err = [], [], []
    for i in range(trials):
        rng = make_rng(_trial_seed(cfg["seed"], i))
        src, tgt = random_subspace(dim, sub, rng), random_subspace(dim, sub, rng)
        kernel = grassmann.geodesic_flow_kernel(src, tgt)
        residuals.append(grassmann.quadrature_residual(kernel, 64))
        start = grassmann.geodesic_point(kernel.system, src, 0.0)
        end = grassmann.geodesic_point(kernel.system, src, 1.0)
        endpoints.append(max(projector_distance(start, src.basis), projector_distance(end, tgt.basis)))
        angles = rng.uniform(0.0, np.pi / 2, sub)
        a, b = rotated_subspace_pair(dim, sub, angles, rng)
        omega = grassmann.principal_system(a, b).omega
        angle_err.append(float(np.max(np.abs(omega - np.sort(angles)))))
    metrics = {
        "quad_residual_max": max(residuals),
        "quad_residual_mean": float(np.mean(residuals)),
        "endpoint_distance_max": max(endpoints),
        "angle_error_max": max(angle_err),
    }
    checks = [
        _le("quad_residual", max(residuals), tol),
        _le("geodesic_endpoints", max(endpoints), tol),
        _le("principal_angle_recovery", max(angle_err), 1e-9),
    ]
    return metrics, checks


def run_gfk_distance(cfg):
    tol = cfg["tol"]
    e1, e2 = np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])
    planar = grassmann.geodesic_flow_kernel(grassmann.Subspace(e1), grassmann.Subspace(e2))
    expected = np.array([[1.0, 2 / np.pi], [2 / np.pi, 1.0]])
    planar_err = float(np.max(np.abs(planar.q - expected)))
    d12 = crossview.geodesic_distance([1.0, 0.0], [0.0, 1.0], planar)
    rng = make_rng(cfg["seed"])
    src, tgt = random_subspace(cfg["dim"], cfg["sub"], rng), random_subspace(cfg["dim"], cfg["sub"], rng)
    metric = crossview.GeodesicCosine(grassmann.geodesic_flow_kernel(src, tgt))
    xs = rng.standard_normal((cfg["trials"], cfg["dim"]))
    dist = metric.pairwise(xs, xs)
    sym_err = float(np.max(np.abs(dist - dist.T)))
    diag_err = float(np.max(np.abs(np.diag(dist))))
    range_err = float(max(0.0, -dist.min(), dist.max() - 2.0))
    metrics = {
        "planar_q": planar.q.tolist(),
        "planar_distance": d12,
        "distance_mean": float(dist[np.triu_indices(len(xs), 1)].mean()),
    }
    checks = [
        _le("planar_kernel", planar_err, tol),
        _le("planar_distance", abs(d12 - (1 - 2 / np.pi)), tol),
        _le("symmetry", sym_err, 1e-12),
        _le("self_distance", diag_err, 1e-12),
        _le("range_0_2", range_err, 1e-12),
    ]
    return metrics, checks


def run_crossview_demo(cfg):
    rng = make_rng(cfg["seed"])
    n, dim, beta = cfg["trials"], cfg["dim"], cfg["beta"]
    rot = random_orthogonal(dim, rng)
    out_map = rng.standard_normal((3, dim))
    views = paired_views(rng.standard_normal((n, dim)), rot, out_map, noise=0.05, seed=rng)
    batch = crossview.CrossViewBatch.from_views(views)
    src = grassmann.subspace_from_data(batch.source_items, 2)
    tgt = grassmann.subspace_from_data(batch.target_items, 2)
    mx = crossview.GeodesicCosine(grassmann.geodesic_flow_kernel(src, tgt), zero_policy="saturate")
    my = crossview.DeepEuclidean(None, beta)
    alpha = cfg["alpha"]
    loss = crossview.unpaired_crossview_loss(batch, mx, my, alpha)
    brute = np.mean([
        (mx(a, b) - alpha * my(ya, yb)) ** 2
        for a, ya in zip(batch.source_items, batch.source_outputs)
        for b, yb in zip(batch.target_items, batch.target_outputs)
    ])
    prompts = rng.standard_normal((2, 4))
    combined = crossview.combined_prompt_loss(
        batch, prompts[0], prompts[1], mx, my, crossview.DeepEuclidean(None, beta),
        alpha=alpha, gamma=cfg["gamma"], lambda_i=cfg["lambda_i"], lambda_p=cfg["lambda_p"],
    )
    attn = rng.random((2, n, 16))
    attn /= attn.sum(axis=2, keepdims=True)
    cvar = crossview.cvar_selfattention_loss(batch, attn[0], attn[1], alpha=alpha, beta=beta)
    kl = crossview.symmetric_kl_metric([0.75, 0.25], [0.25, 0.75], beta=beta)
    far = crossview.DeepEuclidean(None, beta).pairwise(100 * rng.standard_normal((n, dim)), batch.source_items)
    bound = crossview.paired_vs_unpaired_bound_report(views, mx, my, alpha)
    metrics = {
        "unpaired_loss": loss,
        "combined_prompt_loss": combined,
        "cvar_loss": cvar,
        "symmetric_kl_example": kl,
        "paired_loss": bound["paired_loss"],
        "paired_unpaired_ratio": bound["ratio"],
        "pair_count": batch.pair_count,
    }
    checks = [
        _le("unpaired_vs_bruteforce", abs(loss - brute), cfg["tol"] * max(1.0, abs(brute))),
        _le("symmetric_kl_example", abs(kl - 0.5 * math.log(3)), 1e-10),
        _le("beta_clamp", float(far.max()), beta),
        Check("losses_finite", bool(np.isfinite([loss, combined, cvar, bound["paired_loss"]]).all()), 1.0, 1.0),
    ]
    return metrics, checks


def run_cluster_props(cfg):
    alpha, big_l, tol = cfg["alpha"], cfg["L"], cfg["tol"]
    if alpha <= 0 or big_l < 1:
        raise ConfigError("alpha must be positive and L at least 1")
    oracle2 = faircluster.enforcement_optimum_oracle(alpha, big_l, seed=cfg["seed"])
    oracle1 = faircluster.enforcement_optimum_oracle(None, big_l, seed=cfg["seed"])
    closed2 = faircluster.enforcement_closed_form(alpha, big_l)
    closed1 = faircluster.enforcement_closed_form(None, big_l)
    sizes = [1, 2, 5, 10, 50, 100, 500, 1000, 10 * big_l]
    worst = -math.inf
    for lmin in sizes:
        for lmaj in sizes:
            if lmaj > lmin:
                diff = faircluster.enforcement_gap(alpha, lmaj, lmin) - faircluster.enforcement_gap(None, lmaj, lmin)
                worst = max(worst, diff)
    metrics = {
        "ell_star": closed2,
        "ell_star_oracle": oracle2,
        "ell_plain": closed1,
        "ell_plain_oracle": oracle1,
        "gap_shrinkage_worst": worst,
    }
    checks = [
        _le("weighted_optimum_oracle", abs(oracle2 - closed2), tol),
        _le("plain_optimum_oracle", abs(oracle1 - closed1), tol),
        Check("gap_shrinkage", bool(worst < 0), worst, 0.0),
    ]
    return metrics, checks


def run_cluster_demo(cfg):
    n, dim, margin = cfg["trials"], cfg["dim"], faircluster.DEFAULT_MARGIN
    counts = [n, max(n // 2, 6), max(n // 10, 6)]
    feats, labels, means = gaussian_mixture(counts, dim, 2 * margin, cfg["seed"])
    known = labels < 2
    cents = np.array([feats[labels == k].mean(axis=0) for k in range(2)])
    unknown = faircluster.unknown_cluster_init(feats[labels == 2], margin=margin)
    remerged = faircluster.merge_close_centroids(unknown, margin)
    model = faircluster.ClusterModel(np.vstack([cents, unknown]), margin=margin)
    pred = faircluster.assign_nearest(feats, model)
    acc = float(np.mean(pred == labels)) if unknown.shape[0] == 1 else 0.0
    rng = make_rng(cfg["seed"])
    before = model.centroids.copy()
    for _ in range(model.update_period):
        batch = {k: feats[labels == k][rng.integers(0, counts[k], 4)] for k in range(model.n_clusters)}
        model = faircluster.prototype_update(model, batch)
    moved = float(np.max(np.abs(model.centroids - before)))
    contrastive = faircluster.contrastive_cluster_loss(feats[known] / 10, labels[known], model)
    fair = faircluster.fairness_cluster_loss(feats[known] / 10, labels[known], model, alpha=cfg["alpha"])
    metrics = {
        "unknown_clusters": int(unknown.shape[0]),
        "unknown_centroid_error": float(np.linalg.norm(unknown[0] - means[2])) if unknown.shape[0] else None,
        "assignment_accuracy": acc,
        "repulsion": faircluster.cluster_repulsion(model),
        "hinge_loss": faircluster.hinge_prototype_loss(feats, labels, model) if unknown.shape[0] == 1 else None,
        "contrastive_loss": contrastive,
        "fairness_loss": fair,
        "momentum_shift": moved,
        "step": model.step,
    }
    checks = [
        Check("single_unknown_cluster", unknown.shape[0] == 1, float(unknown.shape[0]), 1.0),
        Check("assignment_accuracy", acc >= 0.99, acc, 0.99),
        _le("repulsion_zero", metrics["repulsion"], 0.0),
        Check("merge_idempotent", remerged.shape == unknown.shape and np.array_equal(remerged, unknown), 0.0, 0.0),
        Check("momentum_applied", 0.0 < moved < 1.0, moved, 1.0),
        Check("losses_finite", bool(np.isfinite([contrastive, fair]).all()), 1.0, 1.0),
    ]
    return metrics, checks


def _set_iou(labels, pred, n_classes):
    out = []
    for c in range(n_classes):
        a = set(np.flatnonzero(labels.reshape(-1) == c).tolist())
        b = set(np.flatnonzero(pred.reshape(-1) == c).tolist())
        if a | b:
            out.append(len(a & b) / len(a | b))
    return np.array(out)


def run_metrics_fairness(cfg):
    n_classes, side = cfg["classes"], cfg["side"]
    rng = make_rng(cfg["seed"])
    probs = np.sort(rng.dirichlet(np.full(n_classes, 0.7)))[::-1]
    iou_err, mious, stds = 0.0, [], []
    for i in range(cfg["trials"]):
        labels, _ = imbalanced_label_grid(side, side, probs, _trial_seed(cfg["seed"], i))
        noise = rng.random(labels.shape) < 0.2
        pred = np.where(noise, rng.integers(0, n_classes, labels.shape), labels)
        stats = fairmetrics.iou_stats(fairmetrics.confusion_matrix(labels, pred, n_classes))
        ref = _set_iou(labels, pred, n_classes)
        iou_err = max(iou_err, abs(stats.miou - ref.mean()), abs(stats.iou_std - ref.std()))
        mious.append(stats.miou)
        stds.append(stats.iou_std)
    violations = 0
    for _ in range(20 * cfg["trials"]):
        c = int(rng.integers(1, 33))
        if not fairmetrics.fairness_bound_check(rng.exponential(size=c))["holds"]:
            violations += 1
    labels, colors = imbalanced_label_grid(side, side, probs, cfg["seed"])
    energy = fairmetrics.structural_consistency_energy(colors, np.eye(n_classes)[labels], 0.5, 1.0)
    weights = fairmetrics.class_balance_weight(probs)
    minority_ok = bool(np.all((weights > 0) == (probs < 1.0 / n_classes)))
    metrics = {
        "miou_mean": float(np.mean(mious)),
        "iou_std_mean": float(np.mean(stds)),
        "class_probs": probs.tolist(),
        "balance_weights": weights.tolist(),
        "structural_energy": energy,
    }
    checks = [
        _le("iou_vs_set_oracle", iou_err, 1e-12),
        _le("fairness_bound_violations", float(violations), 0.0),
        Check("minority_weights_positive", minority_ok, float(minority_ok), 1.0),
    ]
    return metrics, checks


def _fd_logdet(stack, y, h=1e-5):
    d = y.size
    jac = np.empty((d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        jac[:, k] = (flows.flow_forward(stack, y + e)[0] - flows.flow_forward(stack, y - e)[0]) / (2 * h)
    return np.linalg.slogdet(jac)[1]


def run_flow_check(cfg):
    rng = make_rng(cfg["seed"])
    round_trip, logdet_err, reload_ok = 0.0, 0.0, True
    for i in range(cfg["trials"]):
        trng = make_rng(_trial_seed(cfg["seed"], i))
        d = int(trng.integers(1, cfg["dim"] + 1))
        stack = flows.random_stack(d, int(trng.integers(1, 7)), trng)
        y = trng.standard_normal(d)
        z, ld = flows.flow_forward(stack, y)
        round_trip = max(round_trip, float(np.max(np.abs(flows.flow_inverse(stack, z) - y))))
        logdet_err = max(logdet_err, abs(ld - _fd_logdet(stack, y)) / max(1.0, abs(ld)))
        again = flows.FlowStack.from_json(stack.to_json())
        reload_ok &= bool(np.array_equal(flows.flow_forward(again, y)[0], z))
    gibbs_ok = True
    for _ in range(20 * cfg["trials"]):
        k = int(rng.integers(2, 10))
        p, q = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
        gibbs_ok &= flows.gibbs_bound_check(p, q)["holds"]
    p = rng.dirichlet(np.ones(5))
    eq = flows.gibbs_bound_check(p, p)
    nll0 = flows.bimal_loss(flows.FlowStack(2, []), np.zeros(2))
    metrics = {"round_trip_max": round_trip, "logdet_rel_err_max": logdet_err, "nll_identity_origin": nll0}
    checks = [
        _le("round_trip", round_trip, cfg["tol"]),
        _le("logdet_vs_finite_difference", logdet_err, 1e-5),
        Check("json_reload_bit_identical", reload_ok, float(reload_ok), 1.0),
        Check("gibbs_bound", gibbs_ok, float(gibbs_ok), 1.0),
        _le("gibbs_equality", abs(eq["cross_entropy"] - eq["entropy"]), 1e-10),
        _le("nll_identity_origin", abs(nll0 - math.log(2 * math.pi)), 1e-12),
    ]
    return metrics, checks


def run_transport_check(cfg):
    rho, n, dim = cfg["rho"], cfg["trials"], cfg["dim"]
    if rho < 0 or n < 2:
        raise ConfigError("rho must be nonnegative and trials at least 2")
    rng = make_rng(cfg["seed"])
    sweep = [-rho, -rho / 2, 0.0, rho / 2, rho]
    mean_z, var_z, w2_err, w2_max = 0.0, 0.0, 0.0, 0.0
    for a in sweep:
        out = flows.transport_transform(rng.standard_normal((n, dim)), rho, rng, alpha=a)
        mean_z = max(mean_z, float(np.max(np.abs(out.z.mean(axis=0) - a))) * math.sqrt(n))
        var_z = max(var_z, float(np.max(np.abs(out.z.var(axis=0, ddof=1) - 1.0))) / math.sqrt(2.0 / (n - 1)))
        w2 = flows.gaussian_w2_per_dim(np.zeros(dim), np.ones(dim), np.full(dim, a), np.ones(dim))
        w2_err = max(w2_err, abs(w2 - abs(a)))
        w2_max = max(w2_max, w2)
    drawn = flows.transport_transform(rng.standard_normal((1000, dim)), rho, rng)
    alpha_span = float(np.max(np.abs(drawn.alpha))) if rho > 0 else 0.0
    metrics = {"mean_z_score_max": mean_z, "var_z_score_max": var_z, "w2_max": w2_max, "drawn_alpha_abs_max": alpha_span}
    checks = [
        _le("mean_within_4_sigma", mean_z, 4.0),
        _le("variance_within_4_sigma", var_z, 4.0),
        _le("w2_equals_abs_alpha", w2_err, 1e-12),
        _le("w2_bounded_by_rho", w2_max, rho + 1e-12),
        _le("drawn_alpha_in_range", alpha_span, rho),
    ]
    return metrics, checks


def run_order_recover(cfg):
    t, trials = cfg["T"], cfg["trials"]
    if not 2 <= t <= directed.MAX_EXACT_T:
        raise ConfigError(f"T must lie in [2, {directed.MAX_EXACT_T}]")
    agree, weight_err = 0, 0.0
    compared = 0
    for i in range(trials):
        grid = make_rng(_trial_seed(cfg["seed"], i)).random((t, t))
        rec = directed.recover_order(grid)
        if t <= 8:
            ref = directed.brute_force_order(grid)
            compared += 1
            agree += int(np.array_equal(rec, ref))
            weight_err = max(weight_err, abs(directed.path_weight(grid, rec) - directed.path_weight(grid, ref)))
    chain_acc = []
    for tt in range(2, 13):
        perm = make_rng(_trial_seed(cfg["seed"], 1000 + tt)).permutation(tt)
        grid = permute_grid(chain_attention(tt, 1.0, 0.0, tt), perm)
        chain_acc.append(directed.order_accuracy(directed.recover_order(grid), perm))
    lcs = directed.order_accuracy([2, 1, 3, 4, 5, 6, 7, 8], [1, 2, 3, 4, 5, 6, 7, 8])
    truth = make_rng(cfg["seed"]).permutation(t)
    noisy = directed.order_report(permute_grid(chain_attention(t, 1.0, 0.5, cfg["seed"]), truth), truth)
    metrics = {
        "bruteforce_compared": compared,
        "bruteforce_agree": agree,
        "chain_accuracy_min": min(chain_acc),
        "lcs_example": lcs,
        "noisy_chain": noisy,
    }
    checks = [
        Check("dp_equals_bruteforce", agree == compared, float(agree), float(compared)),
        _le("dp_weight_error", weight_err, 1e-12),
        Check("noiseless_chains_exact", min(chain_acc) == 100.0, min(chain_acc), 100.0),
        _le("lcs_example", abs(lcs - 87.5), 0.0),
    ]
    return metrics, checks


def run_sgw_check(cfg):
    rng = make_rng(cfg["seed"])
    dim, trials = cfg["dim"], cfg["trials"]
    scales = np.linspace(3.0, 1.0, dim)
    ident, rigid, plain, distinct = 0.0, 0.0, 0.0, math.inf
    for i in range(trials):
        pts = rng.standard_normal((40, dim)) * scales
        moved = pts @ random_orthogonal(dim, rng).T + rng.standard_normal(dim)
        ident = max(ident, crossview.sliced_gw_alignment(pts, pts, seed=i))
        rigid = max(rigid, crossview.sliced_gw_alignment(pts, moved, seed=i))
        plain = max(plain, crossview.sliced_gw_alignment(pts, moved, seed=i, align_frames=False))
        other = rng.standard_normal((40, dim)) * scales[::-1] ** 2
        distinct = min(distinct, crossview.sliced_gw_alignment(pts, other, seed=i))
    metrics = {"identical_max": ident, "rigid_max": rigid, "rigid_unaligned_max": plain, "distinct_min": distinct}
    checks = [
        _le("identical_sets_zero", ident, 0.0),
        _le("rigid_motion_invariance", rigid, cfg["tol"]),
        Check("distinct_sets_positive", distinct > cfg["tol"], distinct, cfg["tol"]),
    ]
    return metrics, checks


COMMANDS = {
    "gfk-verify": (run_gfk_verify, {"seed": DEFAULT_SEED, "dim": 32, "sub": 8, "trials": 100, "tol": 1e-8}),
    "gfk-distance": (run_gfk_distance, {"seed": DEFAULT_SEED, "dim": 8, "sub": 3, "trials": 20, "tol": 1e-12}),
    "crossview-demo": (
        run_crossview_demo,
        {
            "seed": DEFAULT_SEED, "dim": 6, "trials": 16, "tol": 1e-12,
            "alpha": crossview.DEFAULT_ALPHA, "gamma": crossview.DEFAULT_GAMMA, "beta": crossview.DEFAULT_BETA,
            "lambda_i": crossview.DEFAULT_LAMBDA_I, "lambda_p": crossview.DEFAULT_LAMBDA_P,
        },
    ),
    "cluster-props": (run_cluster_props, {"seed": DEFAULT_SEED, "alpha": faircluster.DEFAULT_ALPHA, "L": 100, "tol": 1e-6}),
    "cluster-demo": (run_cluster_demo, {"seed": DEFAULT_SEED, "dim": 8, "trials": 200, "alpha": faircluster.DEFAULT_ALPHA}),
    "metrics-fairness": (run_metrics_fairness, {"seed": DEFAULT_SEED, "trials": 50, "classes": 8, "side": 32}),
    "flow-check": (run_flow_check, {"seed": DEFAULT_SEED, "dim": 8, "trials": 50, "tol": 1e-9}),
    "transport-check": (run_transport_check, {"seed": DEFAULT_SEED, "dim": 4, "trials": 100_000, "rho": flows.DEFAULT_RHO}),
    "order-recover": (run_order_recover, {"seed": DEFAULT_SEED, "T": 6, "trials": 200}),
    "sgw-check": (run_sgw_check, {"seed": DEFAULT_SEED, "dim": 3, "trials": 20, "tol": 1e-8}),
}

FLAG_HELP = {
    "seed": "random seed",
    "dim": "ambient / feature dimension",
    "sub": "subspace dimension",
    "trials": "number of trials or samples",
    "tol": "pass tolerance",
    "alpha": "alpha weight",
    "gamma": "gamma weight",
    "rho": "transport radius",
    "beta": "metric clamp",
    "T": "number of frames",
    "L": "cluster population",
    "classes": "number of classes",
    "side": "label grid side length",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geoadapt", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, defaults) in COMMANDS.items():
        sp = subs.add_parser(name, help=f"run the {name} checks")
        for key, value in defaults.items():
            if key in ("lambda_i", "lambda_p"):
                continue
            flag = f"--{key}"
            sp.add_argument(flag, type=type(value), default=None, help=f"{FLAG_HELP[key]} (default {value})")
        sp.add_argument("--config", help="JSON file with config overrides")
        sp.add_argument("--out", help="report path (default stdout)")
        sp.add_argument("--timing", action="store_true", help="include wall time in the report")
    return parser


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return data


def merge_config(command: str, file_cfg: dict | None, flags: dict) -> dict:
    """flags > config file > defaults; file values are coerced to the default's type."""
    defaults = COMMANDS[command][1]
    cfg = dict(defaults)
    for key, value in (file_cfg or {}).items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {key!r} for {command}")
        want = type(defaults[key])
        if isinstance(value, bool) or not isinstance(value, (int, float)) or (want is int and value != int(value)):
            raise ConfigError(f"config key {key!r} must be {want.__name__}")
        cfg[key] = want(value)
    for key, value in flags.items():
        if key in defaults and value is not None:
            cfg[key] = value
    return cfg


def run(command: str, config: dict, timing: bool = False) -> RunReport:
    func = COMMANDS[command][0]
    start = time.perf_counter()
    metrics, checks = func(config)
    report = RunReport(command, config, metrics, checks)
    if timing:
        report.wall_time = time.perf_counter() - start
    return report


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        file_cfg = load_config(args.config) if args.config else None
        cfg = merge_config(args.command, file_cfg, vars(args))
        report = run(args.command, cfg, timing=args.timing)
        emit_report(report, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidInputError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SchemaError as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
