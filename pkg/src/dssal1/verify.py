"""In-process oracle and invariant checks behind ``dssal1 verify``.

Every check builds its own small random instances from a fixed seed and
compares a production code path against an independent dense computation.
The report lists one line per check and contains no timings, so repeated
invocations print identical text.
"""
import math

import numpy as np

from . import attack, datagen, dssal1, local, manpg, problem, stiefel, uzawa
from .network import Network, WORD_SIZE

EXIT_OK, EXIT_FAILED = 0, 3


def _rand_instance(rng, n, p):
    X = stiefel.random_stiefel(n, p, rng)
    Z = stiefel.random_stiefel(n, p, rng)
    W = rng.standard_normal((n, p))
    return X, W, float(rng.uniform(0.0, 2.0)), Z


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def check_masked_product(rng, count=500):
    """Thin masked product against ``(X W^T + W X^T - beta X X^T) Z`` formed densely."""
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(3, 51))
        p = int(rng.integers(1, min(n, 8) + 1))
        X, W, beta, Z = _rand_instance(rng, n, p)
        agent = local.AgentState(X=X, W=W, beta=beta, cached_AAtX=np.zeros_like(X))
        Q = X @ W.T + W @ X.T - beta * X @ X.T
        worst = max(worst, _rel(dssal1.masked_local_product(agent, Z), Q @ Z))
    return worst <= 1e-9, f"max rel err {worst:.1e} over {count} instances"


def check_multiplier(rng, count=500):
    """``X W^T + W X^T`` against the dense closed-form multiplier; rank <= 2p."""
    worst, worst_rank = 0.0, 0
    for _ in range(count):
        n = int(rng.integers(4, 41))
        p = int(rng.integers(1, min(n // 2, 6) + 1))
        A = rng.standard_normal((n, int(rng.integers(1, 3 * n))))
        X = stiefel.random_stiefel(n, p, rng)
        W = local.multiplier_factor(X, A @ (A.T @ X))
        lam = local.implicit_lambda(local.AgentState(X, W, 1.0, A @ (A.T @ X)))
        P = np.eye(n) - X @ X.T
        AAt = A @ A.T
        dense = -X @ X.T @ AAt @ P - P @ AAt @ X @ X.T
        worst = max(worst, _rel(lam, dense))
        s = np.linalg.svd(lam, compute_uv=False)
        rank = int(np.sum(s > 1e-10 * max(s[0], 1e-300)))
        worst_rank = max(worst_rank, rank - 2 * p)
    return worst <= 1e-9 and worst_rank <= 0, \
        f"max rel err {worst:.1e}, max rank excess {worst_rank}"


def check_retraction_bounds(rng, count=1000):
    """``||R(Z+D) - Z|| <= ||D||`` and ``||R(Z+D) - Z - D|| <= ||D||^2 / 2``."""
    bad = 0
    for _ in range(count):
        n = int(rng.integers(2, 31))
        p = int(rng.integers(1, n + 1))
        Z = stiefel.random_stiefel(n, p, rng)
        D = stiefel.tangent_project(Z, rng.standard_normal((n, p)) * 10 ** rng.uniform(-3, 1))
        R = stiefel.polar_retract(Z + D)
        nd = np.linalg.norm(D)
        slack = 1e-12 * (1.0 + nd * nd)
        bad += np.linalg.norm(R - Z) > nd + slack
        bad += np.linalg.norm(R - Z - D) > 0.5 * nd * nd + slack
    return bad == 0, f"{bad} violations over {count} pairs"


def check_uzawa_descent(rng, count=200):
    """Diagnostic-converged ``D`` satisfies ``g(0) - g(D) >= ||D||^2 / (2 eta)``."""
    worst = math.inf
    for _ in range(count):
        n = int(rng.integers(4, 21))
        p = int(rng.integers(1, min(n, 5) + 1))
        Z = stiefel.random_stiefel(n, p, rng)
        inp = uzawa.SubproblemInput(Z, rng.standard_normal((n, p)),
                                    float(rng.uniform(0.05, 1.0)), float(rng.uniform(0, 0.5)))
        D = uzawa.solve_subproblem(inp, uzawa.SubproblemStop.diagnostic_mode()).D
        gap = (uzawa.subproblem_value(inp, np.zeros_like(D)) - uzawa.subproblem_value(inp, D)
               - float(np.sum(D * D)) / (2 * inp.eta))
        worst = min(worst, gap)
    return worst >= -1e-8, f"min slack {worst:.1e} over {count} instances"


def check_uzawa_kkt_mu0(rng, count=50):
    """With ``mu = 0`` the solution is ``-eta (G - Z sym(Z^T G))``, obtained here
    from the full KKT linear system in vectorized form."""
    worst = 0.0
    for _ in range(count):
        n = int(rng.integers(3, 13))
        p = int(rng.integers(1, min(n, 4) + 1))
        Z = stiefel.random_stiefel(n, p, rng)
        G = rng.standard_normal((n, p))
        eta = float(rng.uniform(0.1, 1.0))
        D = uzawa.solve_subproblem(uzawa.SubproblemInput(Z, G, eta, 0.0),
                                   uzawa.SubproblemStop.diagnostic_mode()).D
        worst = max(worst, float(np.linalg.norm(D - kkt_linear_oracle(Z, G, eta))))
    return worst <= 1e-8, f"max abs err {worst:.1e} over {count} instances"


def kkt_linear_oracle(Z, G, eta):
    """Solve ``D/eta - Z Y = -G``, ``Z^T D + D^T Z = 0``, ``Y = Y^T`` by least squares."""
    n, p = Z.shape
    nD, nY = n * p, p * p
    rows, rhs = [], []
    # stationarity: D/eta - Z Y + G = 0, D and Y row-major vectorized
    stat = np.zeros((nD, nD + nY))
    stat[:, :nD] = np.eye(nD) / eta
    stat[:, nD:] = -np.kron(Z, np.eye(p))
    rows.append(stat)
    rhs.append(-G.ravel())
    feas = np.zeros((nY, nD + nY))
    symm = np.zeros((nY, nD + nY))
    for a in range(p):
        for b in range(p):
            r = a * p + b
            for i in range(n):
                # (Z^T D)_{ab} + (D^T Z)_{ab} = sum_i Z_ia D_ib + D_ia Z_ib
                feas[r, i * p + b] += Z[i, a]
                feas[r, i * p + a] += Z[i, b]
            symm[r, nD + a * p + b] += 1.0
            symm[r, nD + b * p + a] -= 1.0
    rows += [feas, symm]
    rhs += [np.zeros(nY), np.zeros(nY)]
    sol = np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)[0]
    return sol[:nD].reshape(n, p)


def check_feasible_mask_identity(rng, count=20):
    """At ``X_i = Z`` the aggregated shares equal the projected gradient minus ``sum(beta) Z``."""
    worst = 0.0
    for _ in range(count):
        n, p, d = int(rng.integers(10, 41)), int(rng.integers(1, 5)), int(rng.integers(1, 6))
        prob = problem.SpcaProblem([problem.DataShard(rng.standard_normal((n, int(rng.integers(2, 30)))), i)
                                    for i in range(d)], p, 0.1)
        Z = stiefel.random_stiefel(n, p, rng)
        agents = dssal1.init_agents(prob, Z)
        worst = max(worst, dssal1.feasible_mask_identity_check(agents, prob.shards, Z))
    return worst <= 1e-8, f"max deviation {worst:.1e}"


def check_manpg_shares(rng):
    """Every ManPG share is exactly ``A_i A_i^T Z`` for the round's query point."""
    prob = datagen.generate(datagen.GenSpec(n=30, m=120, d=3, p=3, mu=0.05, seed=1))
    Z0 = stiefel.random_stiefel(30, 3, rng)
    res = manpg.manpg_run(prob, Network(3), manpg.ManpgConfig(max_iter=30, keep_shares=True), Z0)
    worst = 0.0
    for Z, shares in zip(res.Z_history, res.share_history):
        for s, S in zip(prob.shards, shares):
            worst = max(worst, float(np.max(np.abs(S - s.samples @ s.samples.T @ Z))))
    return worst <= 1e-12, f"max abs err {worst:.1e} over {len(res.Z_history)} rounds"


def check_network_accounting(rng):
    """One round per all-reduce, ``d * n * p * 8`` bytes each, fixed-order sum."""
    d, n, p = 5, 7, 3
    net = Network(d)
    parts = [rng.standard_normal((n, p)) for _ in range(d)]
    total = net.all_reduce_sum(parts)
    expected = parts[0].copy()
    for x in parts[1:]:
        expected = expected + x
    ok = (net.rounds == 1 and net.bytes == d * n * p * WORD_SIZE
          and np.array_equal(total, expected))
    return ok, f"rounds {net.rounds}, bytes {net.bytes}"


def check_rounds_per_iteration(rng):
    """DSSAL1 performs exactly one all-reduce per outer iteration."""
    prob = datagen.generate(datagen.GenSpec(n=20, m=80, d=4, p=2, mu=0.05, seed=2))
    Z0 = stiefel.random_stiefel(20, 2, rng)
    res = dssal1.run(prob, Network(4), dssal1.DriverConfig(max_iter=40), Z0)
    ok = all(r.rounds == r.k + 1 for r in res.records)
    return ok, f"{len(res.records)} iterations checked"


def check_stationary_start(rng):
    """Starting at the dominant eigenspace with ``mu = 0``: D = 0 and the residual vanishes."""
    prob = datagen.generate(datagen.GenSpec(n=30, m=90, d=3, p=3, mu=0.0, seed=3))
    A = prob.assembled()
    V = np.linalg.eigh(A @ A.T)[1][:, ::-1][:, :3]
    agents = dssal1.init_agents(prob, V)
    QZ = sum(dssal1.masked_local_product(a, V) for a in agents)
    eta = 1.0 / sum(a.beta for a in agents)
    D = uzawa.solve_subproblem(uzawa.SubproblemInput(V, QZ, eta, 0.0),
                               uzawa.SubproblemStop.diagnostic_mode()).D
    normal, skew = problem.stationarity_residual(prob, V)
    ok = np.linalg.norm(D) <= 1e-8 and max(normal, skew) <= 1e-6
    return ok, f"||D|| {np.linalg.norm(D):.1e}, residual {max(normal, skew):.1e}"


def check_pca_degeneration(rng):
    """``d = 1``, ``mu = 0``: both solvers reach the dominant eigenspace."""
    prob = datagen.generate(datagen.GenSpec(n=60, m=240, d=1, p=5, mu=0.0, seed=4))
    A = prob.assembled()
    V = np.linalg.eigh(A @ A.T)[1][:, ::-1][:, :5]
    Z0 = stiefel.random_stiefel(60, 5, rng)
    rd = dssal1.run(prob, Network(1), dssal1.DriverConfig(), Z0)
    rm = manpg.manpg_run(prob, Network(1), manpg.ManpgConfig(adapt=False), Z0)
    dd = stiefel.projection_distance(rd.Z, V)
    dm = stiefel.projection_distance(rm.Z, V)
    ok = rd.converged and rm.converged and dd <= 1e-4 and dm <= 1e-4
    return ok, f"dssal1 {dd:.1e}, manpg {dm:.1e}"


def check_attack_linear_map(rng):
    """Shares from a fixed linear map are recovered once the iterates span ``R^n``."""
    n, p = 30, 3
    M = rng.standard_normal((n, n))
    M = M @ M.T
    state = attack.AttackState(n)
    for _ in range(n // p + 2):
        Z = stiefel.random_stiefel(n, p, rng)
        state.observe(Z, M @ Z)
    err = float(np.linalg.norm(state.reconstruct() - M) / np.linalg.norm(M))
    return err <= 1e-8, f"relative error {err:.1e}"


def check_determinism(rng):
    """Two identical DSSAL1 runs agree bit for bit."""
    prob = datagen.generate(datagen.GenSpec(n=25, m=100, d=3, p=2, mu=0.05, seed=5))
    Z0 = stiefel.random_stiefel(25, 2, rng)
    a = dssal1.run(prob, Network(3), dssal1.DriverConfig(max_iter=60), Z0)
    b = dssal1.run(prob, Network(3), dssal1.DriverConfig(max_iter=60), Z0)
    same = np.array_equal(a.Z, b.Z) and [r.as_row() for r in a.records] == \
        [r.as_row() for r in b.records]
    return bool(same), "identical" if same else "runs differ"


CHECKS = [
    ("masked product vs dense", check_masked_product),
    ("multiplier closed form and rank", check_multiplier),
    ("retraction bounds", check_retraction_bounds),
    ("uzawa descent inequality", check_uzawa_descent),
    ("uzawa mu=0 vs KKT system", check_uzawa_kkt_mu0),
    ("shares at feasibility", check_feasible_mask_identity),
    ("manpg shares vs dense", check_manpg_shares),
    ("network accounting", check_network_accounting),
    ("one round per iteration", check_rounds_per_iteration),
    ("stationary start", check_stationary_start),
    ("pca degeneration", check_pca_degeneration),
    ("attack on a linear map", check_attack_linear_map),
    ("determinism", check_determinism),
]


def run_checks(seed=0):
    """Run every check with its own generator; returns ``[(name, ok, detail)]``."""
    out = []
    for idx, (name, fn) in enumerate(CHECKS):
        rng = np.random.default_rng([seed, idx])
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out


def format_report(results):
    width = max(len(name) for name, _, _ in results)
    lines = [f"{'check':<{width}}  result  detail"]
    for name, ok, detail in results:
        lines.append(f"{name:<{width}}  {'PASS' if ok else 'FAIL':<6}  {detail}")
    failed = sum(not ok for _, ok, _ in results)
    lines.append(f"{len(results) - failed}/{len(results)} checks passed")
    return "\n".join(lines)


def run_verify(seed=0, quiet=False):
    results = run_checks(seed)
    report = format_report(results)
    if not quiet:
        print(report, flush=True)
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_FAILED
