import numpy as np
import pytest
import torch

from fcmac.fairness import EpisodeLedger
from fcmac.mappo.buffer import TrajectoryBuffer
from fcmac.sim import EventKind, SimConfig


@pytest.fixture
def small_config():
    return SimConfig(n_stations=4, sim_time=0.2, warmup=0.02, seed=3)


class ObservationPolicy:
    """Deterministic policy whose choice depends on everything it observes.

    Keeps a log of what it saw so two engines can be compared decision by
    decision.
    """

    def __init__(self):
        self.log = []

    def select(self, batch):
        out = []
        for i in batch.stations:
            s = batch.self_obs[i]
            nb = batch.neighbor_ids(i)
            out.append(int((s.sum() + batch.pairs[nb].sum() + batch.time // 9) % 4))
            self.log.append((batch.time, int(i), tuple(s.tolist()), batch.pairs[nb].tolist()))
        return np.array(out, dtype=np.int64)


@pytest.fixture
def observation_policy():
    return ObservationPolicy


def busy_intervals(events):
    """(start, end) of every frame and ACK in an event log."""
    ev = events[np.lexsort((events[:, 2], events[:, 1], events[:, 0]))]
    opened = {}
    out = []
    for t, kind, sid in ev:
        if kind in (EventKind.TX_START, EventKind.ACK_START):
            opened[(kind, sid)] = t
        elif kind == EventKind.TX_END:
            out.append((opened.pop((EventKind.TX_START, sid)), t))
        elif kind == EventKind.ACK_END:
            out.append((opened.pop((EventKind.ACK_START, sid)), t))
    return out


def lbt_violations(events, difs):
    """TX_START events not preceded by at least ``difs`` of idle medium."""
    starts = sorted({int(t) for t, k, _ in events if k == EventKind.TX_START})
    intervals = sorted(busy_intervals(events))
    bad = 0
    j = 0
    last_end = None
    for t in starts:
        while j < len(intervals) and intervals[j][0] < t:
            last_end = intervals[j][1] if last_end is None else max(last_end, intervals[j][1])
            j += 1
        if t < difs or (last_end is not None and t - last_end < difs):
            bad += 1
    return bad


def random_ledger(rng, m=3, T=None):
    T = T or int(rng.integers(1, 60))
    led = EpisodeLedger(m)
    for i in range(m):
        k = int(rng.integers(0, T + 1))
        for step in sorted(rng.choice(T, size=k, replace=False)):
            led.record_tx(i, int(step), float(rng.uniform(0, 1.5)), 1.0)
    return led.close(T)


def brute_force_gae(r, v, gamma, lam):
    T = len(r)
    delta = [r[t] + gamma * v[t + 1] - v[t] for t in range(T)]
    return np.array([sum((gamma * lam) ** l * delta[t + l] for l in range(T - t)) for t in range(T)])


def random_actor_inputs(rng, B=6, L=4):
    own = torch.tensor(rng.uniform(0, 1, (B, 5)))
    neigh = torch.tensor(rng.uniform(0, 2, (B, L, 2)))
    mask = torch.tensor(rng.uniform(size=(B, L)) < 0.7)
    return own, neigh, mask


def toy_buffer(rng, n=3, agents=(0, 2), T=2):
    buf = TrajectoryBuffer(n, list(agents))
    for t in range(T):
        k = len(agents)
        buf.add_step(100 * t, np.array(agents), rng.uniform(0, 1, (k, 5)), rng.uniform(0, 1, (k, n - 1, 2)),
                     rng.uniform(size=(k, n - 1)) < 0.8, rng.integers(0, 4, k),
                     rng.uniform(0, 1, (k, 5)), rng.uniform(0, 1, (n - k, 2)))
    buf.ledger.record_tx(0, 0, 0.3, 1.0)
    buf.ledger.record_tx(1, T - 1, 0.7, -2.0)
    return buf.close()


def flat_grad_check(loss_fn, params, n_coords, rng, eps=1e-5):
    """Worst per-tensor relative error ``|fd - an| / max(|fd|, |an|)`` (vector
    norms over ``n_coords`` sampled entries) between autograd and central
    differences.  Tensors whose gradient vanishes (both norms below 1e-12,
    e.g. a key bias under softmax shift invariance) are skipped, as are
    coordinates whose +-eps probe straddles a ReLU kink (one-sided slopes
    disagree), where no derivative exists."""
    base = loss_fn()
    f0 = base.item()
    grads = torch.autograd.grad(base, params)
    worst = 0.0
    for p, g in zip(params, grads):
        flat, gflat = p.data.view(-1), g.view(-1)
        idx = rng.choice(flat.numel(), size=min(n_coords, flat.numel()), replace=False)
        fd = np.empty(len(idx))
        smooth = np.ones(len(idx), dtype=bool)
        for k, j in enumerate(idx):
            old = flat[j].item()
            flat[j] = old + eps
            up = loss_fn().item()
            flat[j] = old - eps
            down = loss_fn().item()
            flat[j] = old
            fd[k] = (up - down) / (2 * eps)
            fwd, bwd = (up - f0) / eps, (f0 - down) / eps
            smooth[k] = abs(fwd - bwd) <= 1e-3 * max(abs(fwd), abs(bwd)) + 1e-6
        an = gflat[torch.as_tensor(idx)].numpy()[smooth]
        fd = fd[smooth]
        scale = max(np.linalg.norm(fd), np.linalg.norm(an))
        if scale >= 1e-12:
            worst = max(worst, float(np.linalg.norm(fd - an) / scale))
    return worst


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """``acceptance(criterion, ok, detail)`` prints one verdict line and
    keeps it for the end-of-session summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def report(criterion: str, ok: bool, detail: str) -> bool:
        line = f"{criterion}: {'PASS' if ok else 'FAIL'} ({detail})"
        print(line)
        lines.append(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
