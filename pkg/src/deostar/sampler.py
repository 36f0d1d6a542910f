"""Parallel tempering with windowed even/odd swaps, as a scikit-learn style estimator.

:class:`DEOSampler` runs the sampling / communication / adaptation loop. It
has no training data: ``fit()`` runs the chains and stores traces and a
:class:`~deostar.metrics.RunReport` in trailing-underscore attributes.

Each iteration ``k``:

1. every slot takes a kernel step with its cached gradient, then queries the
   target oracle once at the new position for ``(U~, grad U~)``;
2. gates reopen when ``k`` starts a window;
3. the swap rule is evaluated for every adjacent pair; eligible pairs with
   open gates whose rule fires exchange positions and freeze their gate;
4. interior learning rates and the correction buffer take a stochastic
   approximation step (from the first completed window onwards).

Randomness is split into one stream per slot (gradient, energy and Langevin
noise) plus a coordinator stream (Metropolis coins, SEO parity), all spawned
from ``random_state``.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import InvalidArgumentError, NumericalError
from .index_sim import optimal_window
from .kernels import KernelKind, KernelSpec, batch_update
from .ladder import Ladder, StepSchedule, gap_floor, geometric_init, ladder_step, _repair
from .metrics import (
    RunReport,
    acceptance_rates,
    box_tv_distance,
    mode_coverage,
    round_trip_rate,
)
from .swap import EWVariance, Rule, Scheme, SwapDecision, SwapPolicy, pair_conditions
from .targets import GRID25_BINS, GRID25_BOUNDS, TargetKind, TargetModel, make_target, reference_density_grid

__all__ = ["DEOSampler"]

_BLOCK = 1024


class _NoiseBlocks:
    """Pre-draws per-stream normals (or uniforms) in blocks.

    Consecutive blocks consume each stream sequentially, so results do not
    depend on the block length.
    """

    def __init__(self, rngs, width, kind="normal", block=None):
        block = _BLOCK if block is None else block
        self.rngs, self.width, self.kind, self.block = rngs, width, kind, block
        self.buf = None
        self.i = block

    def next(self):
        if self.i == self.block:
            draw = (
                (lambda g: g.standard_normal((self.block, self.width)))
                if self.kind == "normal"
                else (lambda g: g.random((self.block, self.width)))
            )
            self.buf = np.stack([draw(g) for g in self.rngs], axis=1)
            self.i = 0
        row = self.buf[self.i]
        self.i += 1
        return row


class DEOSampler(BaseEstimator):
    """Non-reversible parallel tempering sampler.

    Parameters
    ----------
    target : TargetModel or str
        Target distribution, or the name of a built-in one.
    n_chains : int
        Number of slots ``P``.
    eta_low, eta_high : float
        Fixed boundary learning rates. Equal values give a flat ladder.
    taus : sequence of float, optional
        Per-slot temperatures. Required by the Metropolis rules.
    target_swap_rate : float
        Target rate ``S`` for ladder and buffer adaptation.
    window : int, optional
        Window ``W``; by default derived from ``n_chains`` and ``S``.
    scheme, rule, lambda_w :
        Swap schedule (``DEO_W``, ``DEO``, ``SEO``, ``ADJ``, ``NONE``), swap
        rule (``deterministic``, ``metropolis``, ``metropolis-window``) and the
        window-wise correction.
    exploit_kernel, explore_kernel : str
        Kernel kind for slot 1 and for the other slots.
    exploit_noise : bool
        Inject Langevin noise into the exploitation chain.
    n_iter : int
        Number of iterations ``K``.
    gamma0, k0 : float
        Step-size schedule ``gamma0 * k0 / (k0 + k)``.
    buffer_gamma0 : float, optional
        Separate ``gamma0`` for the buffer; shares the ladder's by default.
    adapt_ladder, adapt_buffer : bool
        Switch the two stochastic-approximation updates. Adaptation needs a
        non-flat ladder and, for the buffer, the deterministic rule.
    indicator_scope : {"all", "attempted"}
        Which swap-condition outcomes feed adaptation: every pair each
        iteration, or only eligible pairs with open gates.
    sigma2 : "auto", "online" or float
        Energy-noise variance for the Metropolis correction. ``"auto"`` uses
        the target's declared noise, ``"online"`` an exponentially weighted
        estimate from the energy differences.
    burn_in : float
        Fraction of iterations dropped before histogram-based metrics.
    sample_slots : {"exploit", "all"}
        Slots whose positions are recorded as samples.
    init_scale : float
        Initial positions are ``init_scale * N(0, I)``.
    momentum_coef, precond_diag, rms_decay :
        Options of the momentum and preconditioned kernels.
    hist_bounds, hist_bins :
        Histogram box for the TV metric; Grid25 and Mixture1D have defaults.
    random_state : int or None
        Master seed.
    """

    def __init__(
        self,
        target="grid25",
        n_chains=16,
        eta_low=0.003,
        eta_high=0.6,
        taus=None,
        target_swap_rate=0.4,
        window=None,
        scheme="DEO_W",
        rule="deterministic",
        lambda_w=0.0,
        exploit_kernel="SGLD",
        explore_kernel="SGD",
        exploit_noise=True,
        n_iter=20000,
        gamma0=0.1,
        k0=1000.0,
        buffer_gamma0=None,
        adapt_ladder=True,
        adapt_buffer=True,
        indicator_scope="all",
        sigma2="auto",
        burn_in=0.2,
        sample_slots="exploit",
        init_scale=1.0,
        momentum_coef=0.9,
        precond_diag=None,
        rms_decay=None,
        hist_bounds=None,
        hist_bins=None,
        random_state=0,
    ):
        self.target = target
        self.n_chains = n_chains
        self.eta_low = eta_low
        self.eta_high = eta_high
        self.taus = taus
        self.target_swap_rate = target_swap_rate
        self.window = window
        self.scheme = scheme
        self.rule = rule
        self.lambda_w = lambda_w
        self.exploit_kernel = exploit_kernel
        self.explore_kernel = explore_kernel
        self.exploit_noise = exploit_noise
        self.n_iter = n_iter
        self.gamma0 = gamma0
        self.k0 = k0
        self.buffer_gamma0 = buffer_gamma0
        self.adapt_ladder = adapt_ladder
        self.adapt_buffer = adapt_buffer
        self.indicator_scope = indicator_scope
        self.sigma2 = sigma2
        self.burn_in = burn_in
        self.sample_slots = sample_slots
        self.init_scale = init_scale
        self.momentum_coef = momentum_coef
        self.precond_diag = precond_diag
        self.rms_decay = rms_decay
        self.hist_bounds = hist_bounds
        self.hist_bins = hist_bins
        self.random_state = random_state

    # ------------------------------------------------------------------ setup
    def _resolve_target(self) -> TargetModel:
        if isinstance(self.target, TargetModel):
            return self.target
        if isinstance(self.target, str):
            return make_target(self.target)
        raise InvalidArgumentError(f"target must be a TargetModel or a name, got {self.target!r}")

    def _build_ladder(self) -> Ladder:
        P = self.n_chains
        if int(P) != P or P < 2:
            raise InvalidArgumentError(f"n_chains must be an integer >= 2, got {P}")
        P = int(P)
        taus = None if self.taus is None else np.asarray(self.taus, dtype=float)
        if taus is not None and taus.size != P:
            raise InvalidArgumentError(f"need {P} temperatures, got {taus.size}")
        if not (0 < self.eta_low <= self.eta_high and math.isfinite(self.eta_high)):
            raise InvalidArgumentError(f"need 0 < eta_low <= eta_high, got {self.eta_low}, {self.eta_high}")
        if self.eta_low == self.eta_high:
            return Ladder(np.full(P, float(self.eta_low)), taus)
        return geometric_init(self.eta_low, self.eta_high, P, taus)

    def _resolve_policy(self, P) -> SwapPolicy:
        if not 0 < self.target_swap_rate < 1:
            raise InvalidArgumentError(f"target_swap_rate must lie in (0, 1), got {self.target_swap_rate}")
        scheme = Scheme(self.scheme) if self.scheme in {s.value for s in Scheme} else None
        if scheme is None:
            raise InvalidArgumentError(f"unknown scheme {self.scheme!r}")
        if self.window is None:
            W = optimal_window(P, self.target_swap_rate) if scheme is Scheme.DEO_W else 1
            if P == 2 and scheme is Scheme.DEO_W:
                warnings.warn("P=2: the window defaults to 1", UserWarning, stacklevel=3)
        else:
            W = self.window
        return SwapPolicy(scheme, W, self.rule, self.lambda_w)

    def _kernel_spec(self, kind, eta) -> KernelSpec:
        return KernelSpec(
            kind=kind,
            eta=eta,
            momentum_coef=self.momentum_coef,
            precond_diag=self.precond_diag,
            exploit_noise=self.exploit_noise,
            rms_decay=self.rms_decay,
        )

    def _validate(self):
        if int(self.n_iter) != self.n_iter or self.n_iter < 0:
            raise InvalidArgumentError(f"n_iter must be a nonnegative integer, got {self.n_iter}")
        if not 0 <= self.burn_in < 1:
            raise InvalidArgumentError(f"burn_in must lie in [0, 1), got {self.burn_in}")
        if self.indicator_scope not in ("all", "attempted"):
            raise InvalidArgumentError(f"indicator_scope must be 'all' or 'attempted', got {self.indicator_scope!r}")
        if self.sample_slots not in ("exploit", "all"):
            raise InvalidArgumentError(f"sample_slots must be 'exploit' or 'all', got {self.sample_slots!r}")
        if not (math.isfinite(self.init_scale) and self.init_scale >= 0):
            raise InvalidArgumentError(f"init_scale must be >= 0, got {self.init_scale}")
        if not (isinstance(self.sigma2, str) and self.sigma2 in ("auto", "online")):
            try:
                ok = float(self.sigma2) >= 0
            except (TypeError, ValueError):
                ok = False
            if not ok:
                raise InvalidArgumentError(f"sigma2 must be 'auto', 'online' or a nonnegative float, got {self.sigma2!r}")

    # --------------------------------------------------------------- the loop
    def fit(self, X=None, y=None):
        """Run the sampler. ``X`` and ``y`` are ignored."""
        self._validate()
        target = self._resolve_target()
        ladder = self._build_ladder()
        P, d, K = ladder.P, target.dim, int(self.n_iter)
        policy = self._resolve_policy(P)
        W = policy.window
        rule = policy.rule
        if rule.is_metropolis and (ladder.taus is None or np.any(np.diff(ladder.taus) <= 0)):
            raise InvalidArgumentError("Metropolis rules need strictly ascending temperatures (taus)")
        adapt_ladder = bool(self.adapt_ladder) and not ladder.is_flat
        adapt_buffer = bool(self.adapt_buffer) and rule is Rule.DETERMINISTIC_BUFFER
        S = float(self.target_swap_rate)
        sched = StepSchedule(self.gamma0, self.k0)
        bsched = sched if self.buffer_gamma0 is None else StepSchedule(self.buffer_gamma0, self.k0)
        eps_min = gap_floor(ladder) if adapt_ladder else 0.0

        explore = KernelKind(self.explore_kernel)
        exploit = KernelKind(self.exploit_kernel)
        specs = [self._kernel_spec(exploit, ladder.etas[0])] + [
            self._kernel_spec(explore, e) for e in ladder.etas[1:]
        ]
        taus = ladder.temperatures(1.0)
        langevin = np.array(
            [s.kind is KernelKind.SGLD and (s.exploit_noise or i > 0) for i, s in enumerate(specs)]
        )
        groups = self._kernel_groups(specs)

        if rule.is_metropolis:
            if self.sigma2 == "auto":
                sigma2 = np.full(P - 1, target.noise_energy_std**2)
                ew = None
            elif self.sigma2 == "online":
                sigma2, ew = np.zeros(P - 1), EWVariance(P - 1)
            else:
                sigma2, ew = np.full(P - 1, float(self.sigma2)), None
        else:
            sigma2, ew = None, None

        ss = np.random.SeedSequence(self.random_state)
        children = ss.spawn(P + 1)
        slot_rngs = [np.random.default_rng(c) for c in children[:P]]
        coord_rng = np.random.default_rng(children[P])

        # Initial state: positions, one oracle call each.
        pos = np.stack([self.init_scale * g.standard_normal(d) for g in slot_rngs])
        noise = _NoiseBlocks(slot_rngs, 2 * d + 1)
        coins = _NoiseBlocks([coord_rng], P, kind="uniform")
        z = noise.next()
        energies, grads = target.oracle_batch(pos, z[:, 2 * d], z[:, d : 2 * d])
        momentum = np.zeros((P, d))
        accum = np.zeros((P, d))
        particles = np.arange(P)
        etas = np.array(ladder.etas)
        c = 0.0
        gates = np.ones(P - 1, dtype=bool)
        sample_rows = slice(0, 1) if self.sample_slots == "exploit" else slice(0, P)
        n_samp = 1 if self.sample_slots == "exploit" else P

        tr = {
            "index": np.empty((K, P), dtype=np.int64),
            "etas": np.empty((K, P)),
            "buffer": np.empty(K),
            "attempted": np.zeros((K, P - 1), dtype=bool),
            "accepted": np.zeros((K, P - 1), dtype=bool),
            "condition": np.zeros((K, P - 1), dtype=bool),
            "dU": np.empty((K, P - 1)),
            "score": np.empty((K, P - 1)),
            "samples": np.empty((K, n_samp, d)),
        }
        pair_idx = np.arange(1, P)
        lam = policy.effective_lambda
        self.status_ = "ok"
        repairs = 0
        k = 0
        try:
            for k in range(K):
                # 1. sampling phase
                z = noise.next()
                for rows, spec in groups:
                    new, m, a = batch_update(spec, pos[rows], grads[rows], etas[rows], momentum[rows], accum[rows])
                    pos[rows], momentum[rows], accum[rows] = new, m, a
                if langevin.any():
                    scale = np.where(langevin, np.sqrt(2.0 * etas * taus), 0.0)
                    pos += scale[:, None] * z[:, :d]
                energies, grads = target.oracle_batch(pos, z[:, 2 * d], z[:, d : 2 * d])
                if not math.isfinite(pos.sum() + grads.sum() + energies.sum()):
                    bad = int(np.flatnonzero(~np.all(np.isfinite(pos), axis=1) | ~np.isfinite(energies)
                                             | ~np.all(np.isfinite(grads), axis=1))[0])
                    raise NumericalError(f"non-finite state in slot {bad + 1}", pos[bad], iteration=k)

                # 2-3. communication phase
                if k % W == 0:
                    gates[:] = True
                u = coins.next()[0]
                if policy.scheme is Scheme.ADJ:
                    du, score, cond = self._adj_pass(energies, taus, rule, sigma2, lam, u[1:])
                    attempted = np.ones(P - 1, dtype=bool)
                else:
                    du, score, cond = pair_conditions(energies, taus, rule, c, sigma2, lam, u[1:])
                    if policy.scheme is Scheme.NONE:
                        attempted = np.zeros(P - 1, dtype=bool)
                    elif policy.scheme is Scheme.SEO:
                        attempted = pair_idx % 2 == int(u[0] < 0.5)
                    else:
                        attempted = (pair_idx % 2 == (k // W) % 2) & gates
                accepted = attempted & cond
                # Ascending order also replays the ADJ sweep, whose pairs overlap.
                for i in np.flatnonzero(accepted) if accepted.any() else ():
                    j = [i + 1, i]
                    pos[[i, i + 1]] = pos[j]
                    grads[[i, i + 1]] = grads[j]
                    momentum[[i, i + 1]] = momentum[j]
                    accum[[i, i + 1]] = accum[j]
                    energies[[i, i + 1]] = energies[j]
                    particles[[i, i + 1]] = particles[j]
                gates &= ~accepted
                if ew is not None:
                    ew.update(du)
                    sigma2 = 0.5 * ew.var

                tr["index"][k] = particles
                tr["etas"][k] = etas
                tr["buffer"][k] = c
                tr["attempted"][k] = attempted
                tr["accepted"][k] = accepted
                tr["condition"][k] = cond
                tr["dU"][k] = du
                tr["score"][k] = score
                tr["samples"][k] = pos[sample_rows]

                # 4. adaptation
                if k >= W and (adapt_ladder or adapt_buffer):
                    mask = None if self.indicator_scope == "all" else attempted
                    ind = cond if mask is None else cond[mask]
                    if adapt_ladder:
                        field_ = cond - S if mask is None else np.where(mask, cond - S, 0.0)
                        new = ladder_step(etas, field_, sched(k), eps_min)
                        if not np.all(np.diff(new) > 0):
                            new = _repair(new, eps_min)
                            repairs += 1
                        etas = new
                    if adapt_buffer and ind.size:
                        c = max(0.0, c + bsched(k) * (ind.mean() - S))
        except NumericalError:
            self.status_ = "numerical-error"
            self.n_ladder_repairs_ = repairs
            self._store(tr, k, target, ladder, policy, etas, c, partial=True)
            self.report_.ladder_repairs = repairs
            raise
        self.n_ladder_repairs_ = repairs
        if repairs:
            warnings.warn(
                f"{repairs} ladder updates lost monotonicity and were projected back", RuntimeWarning, stacklevel=2
            )
        self._store(tr, K, target, ladder, policy, etas, c)
        self.report_.ladder_repairs = repairs
        return self

    @staticmethod
    def _kernel_groups(specs):
        """Group slots with identical kernel settings so one batched update serves each group."""
        groups = []
        for i, spec in enumerate(specs):
            key = (spec.kind, spec.momentum_coef, spec.rms_decay)
            for g in groups:
                if g[0] == key:
                    g[1].append(i)
                    break
            else:
                groups.append((key, [i], spec))
        out = []
        for _, rows, spec in groups:
            sl = slice(rows[0], rows[-1] + 1) if rows == list(range(rows[0], rows[-1] + 1)) else np.array(rows)
            out.append((sl, spec))
        return out

    @staticmethod
    def _adj_pass(energies, taus, rule, sigma2, lam, uniforms):
        """Sequential sweep: each pair sees the energies left by the previous swap."""
        n = energies.size - 1
        du, score, cond = np.empty(n), np.empty(n), np.zeros(n, bool)
        s2 = np.broadcast_to(np.zeros(1) if sigma2 is None else sigma2, (n,))
        e = energies.copy()
        for i in range(n):
            a, b, ok = pair_conditions(e[i : i + 2], taus[i : i + 2], rule, 0.0, s2[i], lam, uniforms[i : i + 1])
            du[i], score[i], cond[i] = a[0], b[0], ok[0]
            if ok[0]:
                e[i], e[i + 1] = e[i + 1], e[i]
        return du, score, cond

    # -------------------------------------------------------------- reporting
    def _store(self, tr, n_done, target, ladder, policy, etas, c, partial=False):
        K = n_done
        for key in tr:
            tr[key] = tr[key][:K]
        self.target_ = target
        self.window_ = policy.window
        self.policy_ = policy
        self.initial_ladder_ = ladder
        self.ladder_ = ladder.with_etas(etas) if not ladder.is_flat else ladder
        self.buffer_ = float(c)
        self.index_trace_ = tr["index"]
        self.ladder_trace_ = tr["etas"]
        self.buffer_trace_ = tr["buffer"]
        self.decisions_ = {key: tr[key] for key in ("attempted", "accepted", "condition", "dU", "score")}
        self.sample_trace_ = tr["samples"]
        self.burn_in_start_ = int(self.burn_in * K)
        samples = tr["samples"][self.burn_in_start_ :]
        self.samples_ = samples.reshape(-1, target.dim)
        self.report_ = self._report(K, target, policy, etas, c, partial)

    def _hist_setup(self, target):
        if self.hist_bounds is not None:
            bins = self.hist_bins if self.hist_bins is not None else 60
            return np.asarray(self.hist_bounds, float).reshape(-1, 2), bins
        if target.kind is TargetKind.GRID25:
            return np.asarray(GRID25_BOUNDS), self.hist_bins or GRID25_BINS
        if target.kind is TargetKind.MIXTURE1D:
            return np.array([[-10.0, 10.0]]), self.hist_bins or 100
        return None, None

    def reference_grid(self):
        """``(masses, edges)`` used for the TV metric, or ``None`` without a default box."""
        target = self._resolve_target() if not hasattr(self, "target_") else self.target_
        bounds, bins = self._hist_setup(target)
        if bounds is None:
            return None
        return reference_density_grid(target, bounds, bins)

    def _report(self, K, target, policy, etas, c, partial):
        start = self.burn_in_start_
        rep = RunReport(
            iterations=K,
            window=policy.window,
            final_etas=list(map(float, etas)),
            final_buffer=float(c),
            ladder_trace=self.ladder_trace_,
            buffer_trace=self.buffer_trace_,
            status="partial" if partial else "ok",
        )
        if K == 0:
            return rep
        rep.round_trips_per_1000_iters = round_trip_rate(self.index_trace_)
        if start < K:
            rep.per_pair_acceptance = acceptance_rates(self.decisions_, "attempted", start).tolist()
            rep.per_pair_condition_rate = acceptance_rates(self.decisions_, "evaluated", start).tolist()
            samples = self.samples_
            ref = self.reference_grid()
            if ref is not None:
                masses, edges = ref
                inside = np.all([(samples[:, i] >= e[0]) & (samples[:, i] <= e[-1]) for i, e in enumerate(edges)], 0)
                if inside.any():
                    rep.tv_distance = box_tv_distance(samples, masses, edges)
            if target.kind is TargetKind.GRID25:
                rep.mode_coverage = mode_coverage(samples)
            if target.kind is TargetKind.MIXTURE1D:
                rep.right_mode_weight = float(np.mean(self.sample_trace_[start:, 0, 0] > 0))
        return rep

    # ----------------------------------------------------------- conveniences
    def iter_decisions(self):
        """Yield ``(iteration, [SwapDecision, ...])`` from the recorded arrays."""
        dec = self.decisions_
        for k in range(dec["attempted"].shape[0]):
            yield k, [
                SwapDecision(
                    p + 1,
                    bool(dec["attempted"][k, p]),
                    bool(dec["accepted"][k, p]),
                    float(dec["dU"][k, p]),
                    float(dec["score"][k, p]),
                    bool(dec["condition"][k, p]),
                )
                for p in range(dec["attempted"].shape[1])
            ]
