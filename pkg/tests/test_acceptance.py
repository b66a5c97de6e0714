"""End-to-end acceptance tests: one test per release criterion.

Tolerances are stated inline next to each assertion. The suite is heavier
than the unit modules (the sine-surface experiment runs a full MCMC fit at
production settings) but still finishes in a few minutes.

`test_criterion_2_segment_variance_certification` is EXPECTED TO FAIL and is
left red on purpose. The closed-form segment covariance and the direct
double integral of the same integrand disagree structurally, far beyond the
certified tolerance, and the mismatch is not a bug in either evaluator: the
closed forms weight every separation lag by the full segment length where
the double integral carries the triangular overlap weight. The failure
message carries the per-family error table and the safe-direction analysis;
weakening the tolerance would hide a real discrepancy. Details live in the
project notes outside the package.
"""
import json
import math
import threading
import time
import urllib.request

import numpy as np
import pytest

from oracles import conditional_moments, simulate_gp_dataset
from test_kernels import fd_check_blocks, random_spec
from wombler import archive
from wombler.cli import main as cli_main
from wombler.geometry import GridSpec, extract_contours, make_grid, predict_surface
from wombler.kernels import KernelSpec, cross_cov_blocks, joint_cov_at_zero, kernel_value
from wombler.model import McmcConfig, SpatialDataset, ThetaDraw, fit_theta, sample_z_beta
from wombler.numerics import (
    STREAM_FIT,
    STREAM_RATES,
    STREAM_SIMULATE,
    STREAM_WOMBLE,
    STREAM_ZBETA,
    gauss_legendre,
    stream,
)
from wombler.rates import conditional_rates, sprates
from wombler.server import make_server
from wombler.womble import (
    closed_vs_quadrature_report,
    curve_length,
    gamma_cross,
    k_gamma_closed,
    k_gamma_reduced,
    segmentize,
    spwombling,
    womble_moments,
    womble_weights,
)

pytestmark = pytest.mark.acceptance


def test_criterion_1_kernel_derivative_oracle():
    """1000 random (family, theta, displacement) cases vs central differences.

    Every analytic derivative block must match the finite difference of the
    block one order below to relative error <= 1e-5, in under 10 seconds.
    """
    rng = np.random.default_rng(20260817)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        spec = random_spec(rng)
        r = rng.uniform(0.1, 5.0)
        ang = rng.uniform(0.0, 2.0 * math.pi)
        worst = max(worst, fd_check_blocks(spec, (r * math.cos(ang), r * math.sin(ang))))
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-5, f"worst finite-difference relative error {worst:.3e} > 1e-5"
    assert elapsed < 10.0, f"1000-case oracle took {elapsed:.1f}s, budget is 10s"


def test_criterion_2_segment_variance_certification():
    """Closed-form segment covariance vs direct double quadrature (EXPECTED RED).

    Sweep: sigma2 in {0.5, 1, 5} x phi in {0.2, 1, 3} x t* in {0.1, 1, 5},
    all families (gradient block only for matern32), 256-node quadrature.
    Certified to <= 1e-4; the structural mismatch between the flat and the
    triangular lag weight makes that unattainable, so this test stays red.
    The parts that can hold do hold and are asserted first: the closed forms
    reproduce the flat-weight 1-D reduction to 1e-9, the gaussian closed form
    keeps the k22/k11 = 6 phi^2 diagonal ratio to 1e-6, and closed - quadrature
    is PSD everywhere, so intervals built from the closed forms are valid but
    conservative (never too narrow).
    """
    t0 = time.perf_counter()
    sweep = [
        (family, s2, phi, ts)
        for family in ("matern32", "matern52", "gaussian")
        for s2 in (0.5, 1.0, 5.0)
        for phi in (0.2, 1.0, 3.0)
        for ts in (0.1, 1.0, 5.0)
    ]
    fam_worst: dict = {}
    for family, s2, phi, ts in sweep:
        theta = ThetaDraw(s2, phi, 0.1)
        closed = k_gamma_closed(family, theta, ts)
        flat = k_gamma_reduced(family, theta, ts, triangle=False)
        scale = float(np.max(np.abs(closed)))
        assert np.max(np.abs(closed - flat)) <= 1e-9 * scale, (
            f"closed form drifts from its own flat-weight reduction at "
            f"({family}, sigma2={s2}, phi={phi}, t*={ts})"
        )
        if family == "gaussian":
            ratio = closed[1, 1] / closed[0, 0]
            assert abs(ratio - 6.0 * phi * phi) <= 1e-6 * 6.0 * phi * phi, (
                f"gaussian k22/k11 ratio {ratio:.8g} deviates from 6 phi^2"
            )
        rep = closed_vs_quadrature_report(family, theta, ts, nodes=256)
        assert rep["dominates"], (
            f"closed minus quadrature is not PSD at ({family}, sigma2={s2}, "
            f"phi={phi}, t*={ts}); conservative-interval guarantee broken"
        )
        fam_worst[family] = max(fam_worst.get(family, 0.0), rep["max_rel_err"])
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0, f"certification sweep took {elapsed:.1f}s, budget is 60s"
    worst = max(fam_worst.values())
    assert worst <= 1e-4, (
        "closed-form segment covariance disagrees with the double integral "
        f"(worst relative error by family: "
        f"{ {k: round(v, 4) for k, v in fam_worst.items()} }). The closed "
        "forms weight every lag by the full segment length; the double "
        "integral carries the triangular overlap weight t* - |lag|. The "
        "difference is PSD (asserted above), so closed-form intervals are "
        "wider, never narrower, than the double-integral ones. Reproduce any "
        "cell with wombler.womble.closed_vs_quadrature_report; the flat vs "
        "triangular diagnosis is k_gamma_reduced(..., triangle=True/False)."
    )


def test_criterion_3_conditioning_oracle():
    """Conditional moments vs brute-force conditioning of assembled joints.

    Both conditionals (derivative components at a point, wombling measures on
    a segment) against np.linalg.solve block conditioning of the explicitly
    assembled (N + C) joint covariance, N in {3, 5}, tolerance 1e-8.
    """
    theta = ThetaDraw(1.4, 0.8, 0.3)
    s0 = np.array([0.7, 0.9])
    seg = segmentize([(0.1, 0.2), (1.3, 1.1)])[0]
    for n in (3, 5):
        rng = np.random.default_rng(40 + n)
        coords = rng.uniform(0.0, 3.0, (n, 2))
        z = rng.standard_normal(n)
        dist = np.hypot(
            coords[:, 0][:, None] - coords[None, :, 0],
            coords[:, 1][:, None] - coords[None, :, 1],
        )
        for family in ("matern32", "matern52", "gaussian"):
            spec = KernelSpec(family, theta.sigma2, theta.phi)
            sigma_z = kernel_value(dist, spec)

            mean, cov = conditional_rates(s0, z, theta, coords, family)
            c = mean.shape[0]
            joint = np.zeros((n + c, n + c))
            joint[:n, :n] = sigma_z
            for i in range(n):
                blocks = cross_cov_blocks(s0 - coords[i], spec)
                cross = blocks.dk if c == 2 else np.concatenate([blocks.dk, blocks.d2k])
                joint[i, n:] = joint[n:, i] = cross
            joint[n:, n:] = joint_cov_at_zero(spec)
            ref_mean, ref_cov = conditional_moments(joint, z, n)
            assert np.max(np.abs(mean - ref_mean)) < 1e-8, f"rates mean, N={n}, {family}"
            assert np.max(np.abs(cov - ref_cov)) < 1e-8, f"rates cov, N={n}, {family}"

            g = gamma_cross(seg, coords, theta, family)
            k_prior = k_gamma_closed(family, theta, seg.length)
            joint_w = np.block([[sigma_z, g], [g.T, k_prior]])
            ref_mean, ref_cov = conditional_moments(joint_w, z, n)
            means, covs = womble_moments([seg], z, theta, coords, family)
            assert np.max(np.abs(means[0] - ref_mean)) < 1e-8, f"segment mean, N={n}, {family}"
            assert np.max(np.abs(covs[0] - ref_cov)) < 1e-8, f"segment cov, N={n}, {family}"


EXPERIMENT_SEED = 0


def sine_truth_columns(px, py):
    """Analytic dx, dy, dxx, dxy, dyy of 20 sin(r), r = hypot(x, y).

    NaN at the origin, where the cone tip is not differentiable.
    """
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    r = np.hypot(px, py)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.stack(
            [
                20.0 * np.cos(r) * px / r,
                20.0 * np.cos(r) * py / r,
                20.0 * (-np.sin(r) * px**2 / r**2 + np.cos(r) * py**2 / r**3),
                -20.0 * px * py * (np.sin(r) / r**2 + np.cos(r) / r**3),
                20.0 * (-np.sin(r) * py**2 / r**2 + np.cos(r) * px**2 / r**3),
            ],
            axis=-1,
        )


def test_criterion_4_sine_surface_experiment():
    """Full-scale synthetic reproduction: N=100, y ~ Normal(20 sin||s||, 1).

    Fit at 10000 iterations / 5000 burn-in on [-10, 10]^2 with the
    twice-differentiable Matern kernel, then check
      (a) the tau2 95% interval contains the true nugget 1.0,
      (b) the phi posterior median lies in [0.25, 0.55],
      (c) the sigma2 posterior median lies in [100, 900],
      (d) 95% intervals of the five derivative components cover the analytic
          truth on the 19x19 interior unit grid at a rate in [88%, 100%],
      (e) the gradient and curvature totals along the -15 level contour of
          the posterior mean surface bracket the truth obtained by direct
          quadrature of the analytic derivatives along that same polyline,
          with each interval endpoint slackened by 25% of its magnitude.
    """
    seed = EXPERIMENT_SEED
    rng = stream(seed, STREAM_SIMULATE)
    coords = rng.uniform(-10.0, 10.0, (100, 2))
    y = 20.0 * np.sin(np.hypot(coords[:, 0], coords[:, 1])) + rng.standard_normal(100)
    data = SpatialDataset(coords, y)
    config = McmcConfig(iterations=10000, burn_in=5000, seed=seed)
    fit = fit_theta(data, "matern52", config, stream(seed, STREAM_FIT))

    tau2 = fit.summaries["tau2"]
    assert tau2["q2.5"] <= 1.0 <= tau2["q97.5"], (
        f"(a) tau2 interval ({tau2['q2.5']:.3f}, {tau2['q97.5']:.3f}) misses 1.0"
    )
    phi_med = fit.summaries["phi"]["q50"]
    assert 0.25 <= phi_med <= 0.55, f"(b) phi median {phi_med:.4f} outside [0.25, 0.55]"
    s2_med = fit.summaries["sigma2"]["q50"]
    assert 100.0 <= s2_med <= 900.0, f"(c) sigma2 median {s2_med:.1f} outside [100, 900]"

    draws = sample_z_beta(data, fit.chain, "matern52", stream(seed, STREAM_ZBETA))

    grid = make_grid(GridSpec(-9.0, 9.0, -9.0, 9.0, 19, 19))
    rates = sprates(grid, data, draws, "matern52", stream(seed, STREAM_RATES))
    truth = sine_truth_columns(grid[:, 0], grid[:, 1])
    usable = np.isfinite(truth) & ~rates.missing[:, None]
    inside = (rates.q025 <= truth) & (truth <= rates.q975)
    coverage = float(inside[usable].mean())
    assert 0.88 <= coverage <= 1.0, (
        f"(d) derivative coverage {coverage:.4f} over {int(usable.sum())} "
        "grid cells outside [0.88, 1.00]"
    )

    surface = predict_surface(data, draws, GridSpec(-10.0, 10.0, -10.0, 10.0, 21, 21), "matern52")
    contours = extract_contours(surface, -15.0)
    assert contours, "(e) posterior mean surface has no -15 level contour"
    curve = max(contours, key=lambda c: curve_length(segmentize(c)))
    segments = segmentize(curve)
    womble = spwombling(curve, data, draws, "matern52", stream(seed, STREAM_WOMBLE))

    truth_grad = 0.0
    truth_curv = 0.0
    for s in segments:
        t, w = gauss_legendre(32, 0.0, s.length)
        cols = sine_truth_columns(s.start[0] + t * s.u[0], s.start[1] + t * s.u[1])
        a1, a2 = womble_weights(s.u)
        truth_grad += float(w @ (cols[:, :2] @ a1))
        truth_curv += float(w @ (cols[:, 2:] @ a2))

    for ci, comp, target in (
        (0, "gradient", truth_grad),
        (1, "curvature", truth_curv),
    ):
        lo = float(womble.totals["q2.5"][ci])
        hi = float(womble.totals["q97.5"][ci])
        lo_slack = lo - 0.25 * abs(lo)
        hi_slack = hi + 0.25 * abs(hi)
        assert lo_slack <= target <= hi_slack, (
            f"(e) {comp} total interval ({lo:.2f}, {hi:.2f}) with 25% endpoint "
            f"slack misses the quadrature truth {target:.2f} along the "
            f"{curve_length(segments):.2f}-long extracted contour"
        )


def test_criterion_5_tau2_interval_calibration():
    """20 seeded replications at N=50 with a known nugget.

    Data are drawn from the generative model (sigma2=2, phi=0.7, tau2=0.5,
    intercept 1) and refit; the 95% tau2 interval must cover the truth in at
    least 17 of 20 replications.
    """
    tau2_true = 0.5
    covered = 0
    misses = []
    for rep in range(20):
        rng = stream(1000 + rep, STREAM_SIMULATE)
        coords, y, _ = simulate_gp_dataset(
            rng, 50, "matern52", sigma2=2.0, phi=0.7, tau2=tau2_true, beta0=1.0
        )
        data = SpatialDataset(coords, y)
        config = McmcConfig(iterations=2500, burn_in=1000, seed=rep)
        fit = fit_theta(data, "matern52", config, stream(1000 + rep, STREAM_FIT))
        s = fit.summaries["tau2"]
        if s["q2.5"] <= tau2_true <= s["q97.5"]:
            covered += 1
        else:
            misses.append((rep, round(s["q2.5"], 3), round(s["q97.5"], 3)))
    assert covered >= 17, f"tau2 covered in only {covered}/20 replications; misses: {misses}"


def test_criterion_6_cli_bit_reproducibility(tmp_path):
    """Identical seed and config give bit-identical CSVs, JSON, and SVG."""
    rng = stream(5, STREAM_SIMULATE)
    coords = rng.uniform(0.0, 5.0, (12, 2))
    y = np.sin(coords[:, 0]) + 0.3 * coords[:, 1] + 0.2 * rng.standard_normal(12)
    input_csv = tmp_path / "sites.csv"
    archive.write_data_csv(input_csv, coords, y)
    curve_csv = tmp_path / "curve.csv"
    archive.write_curve_csv(curve_csv, np.array([[0.5, 0.5], [2.0, 1.5], [3.5, 3.0]]))

    outputs = []
    for run in ("one", "two"):
        root = tmp_path / run
        arch = root / "arch"
        for args in (
            ["fit", "--input", str(input_csv), "--archive", str(arch),
             "--kernel", "matern2", "--iterations", "240", "--burn-in", "120",
             "--seed", "5"],
            ["zbeta", "--archive", str(arch)],
            ["rates", "--archive", str(arch), "--grid", "0,5,0,5,5,4",
             "--out", str(root / "rates")],
            ["womble", "--archive", str(arch), "--curve", str(curve_csv),
             "--out", str(root / "wm"), "--seed", "5"],
            ["plot", "--archive", str(arch), "--grid", "0,5,0,5,8,8",
             "--curve", str(curve_csv), "--out", str(root / "plot")],
        ):
            assert cli_main(args) == 0, f"command failed: {args[0]}"
        outputs.append(root)

    tracked = [
        "arch/manifest.json", "arch/data.csv", "arch/theta.csv",
        "arch/summaries.json", "arch/z.csv", "arch/beta.csv",
        "rates/rates_dx.csv", "rates/rates_dyy.csv", "rates/manifest.json",
        "wm/wm1.csv", "wm/wm2.csv", "wm/totals.json", "wm/manifest.json",
        "plot/surface.csv", "plot/plot.svg",
    ]
    for rel in tracked:
        a = (outputs[0] / rel).read_bytes()
        b = (outputs[1] / rel).read_bytes()
        assert a == b, f"{rel} differs between identically seeded runs"


def test_secondary_http_and_cli_paths_agree(fitted_archive, tmp_path):
    """The HTTP submission path and the CLI path report identical results.

    The browser client posts exactly this JSON body; equivalence of the two
    server-side paths (same archive, same seed) means identical per-segment
    sig vectors and identical totals.
    """
    curve = [[0.5, 0.5], [2.0, 1.5], [3.5, 3.0]]
    curve_csv = tmp_path / "curve.csv"
    archive.write_curve_csv(curve_csv, np.array(curve))
    out = tmp_path / "wm"
    assert cli_main([
        "womble", "--archive", str(fitted_archive), "--curve", str(curve_csv),
        "--out", str(out), "--seed", "7",
    ]) == 0
    totals = json.loads((out / "totals.json").read_text())

    httpd = make_server(str(fitted_archive), "127.0.0.1", 0)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    try:
        req = urllib.request.Request(
            f"http://127.0.0.1:{httpd.server_address[1]}/api/womble",
            data=json.dumps({"curve": curve, "seed": 7}).encode(),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        with urllib.request.urlopen(req, timeout=60) as resp:
            body = json.loads(resp.read())
    finally:
        httpd.shutdown()
        httpd.server_close()

    assert body["totals"] == totals["totals"]
    assert body["averages"] == totals["averages"]
    for comp, fname in (("gradient", "wm1.csv"), ("curvature", "wm2.csv")):
        rows = (out / fname).read_text().splitlines()[1:]
        cli_sig = [int(r.split(",")[4]) for r in rows]
        http_sig = [seg["sig"] for seg in body["segments"][comp]]
        assert cli_sig == http_sig, f"{comp} sig vectors differ between paths"
