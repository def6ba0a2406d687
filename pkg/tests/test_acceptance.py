"""End-to-end acceptance checks; each test prints one PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from sleepdiff.attention import DiffAttention, LambdaParams, explode_records
from sleepdiff.config import AblationFlags, ExperimentConfig
from sleepdiff.data import Recording, bandpass, read_container, resample, write_container
from sleepdiff.data.synth import generate_domains
from sleepdiff.harness.batching import build_batch
from sleepdiff.harness.checkpoint import load_checkpoint, save_checkpoint
from sleepdiff.harness.export import export_attention, load_index
from sleepdiff.harness.gradsuite import run_suite
from sleepdiff.harness.loocv import run_loocv
from sleepdiff.harness.metrics import average_rows
from sleepdiff.harness.train import DomainStore, evaluate, make_optimizer, train_step
from sleepdiff.model import SleepDiffFormer
from sleepdiff.numerics import RngTree, Tensor

GRAD_TOL = 1e-5
GRAD_SEEDS = 10
GRAD_BUDGET_S = 300
ROW_SUM_TOL = 1e-5
STANDARD_REF_TOL = 1e-6
OVERFIT_STEPS = 200
OVERFIT_LR = 5e-4
OVERFIT_BUDGET_S = 120
LOOCV_SEEDS = (0, 1, 2)
LOOCV_RECORDINGS = 40
LOOCV_MIN_ACC = 85.0
LOOCV_MIN_MF1 = 80.0
LOOCV_RUN_BUDGET_S = 15 * 60
LOOCV_EPOCHS = 12
FA_MIN_WINS = 2
METRIC_TOL = 1e-9
TABLE_ACC = (78.19, 75.82, 76.46, 76.39, 74.72)
TABLE_MF1 = (72.44, 73.39, 73.22, 68.33, 71.78)
PRINTED_AVG = (76.32, 71.83)
PASSBAND_TOL = 0.05
STOPBAND_DB = 20.0
RESAMPLE_TOL = 0.02
DSA_MAPS_PER_SEQUENCE = 640

REDUCED = dict(d=32, n_layers=2)


def report(capsys, n: int, ok: bool, text: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}"
    ACCEPTANCE_LINES.append(line)
    with capsys.disabled():
        print("\n" + line)


@pytest.fixture(scope="module")
def synthetic_domains(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_domains")
    generate_domains(root, n_recordings=LOOCV_RECORDINGS, n_epochs=20, seed=0)
    return root


def test_c1_gradient_suite(capsys):
    t0 = time.perf_counter()
    results = run_suite(range(GRAD_SEEDS), tolerance=GRAD_TOL)
    elapsed = time.perf_counter() - t0
    failed = [f"{r.name}/seed{r.seed}" for r in results if not r.report.passed]
    worst = max(r.report.worst_error for r in results)
    names = {r.name for r in results}
    ok = not failed and elapsed < GRAD_BUDGET_S
    report(capsys, 1, ok, f"{len(names)} ops x {GRAD_SEEDS} seeds, worst rel err {worst:.1e}, "
                          f"{elapsed:.0f}s (failures: {failed or 'none'})")
    assert ok


def _softmax(z):
    z = z - z.max(-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(-1, keepdims=True)


def _controlled_attention(d, heads, lam_value, tie_halves, seed=0):
    """Differential attention whose lambda is exactly ``lam_value``."""
    dh = d // (2 * heads)
    lp = LambdaParams(heads, dh, 1, RngTree(seed).child("lam"), np.float64, std=0.0)
    lp.init = lam_value  # all four vectors are zero, so exp - exp cancels exactly
    attn = DiffAttention(d, heads, lp, RngTree(seed).child("attn"), np.float64, head_norm=False)
    if tie_halves:
        for W in (attn.W_q, attn.W_k):
            for h in range(heads):
                base = 2 * dh * h
                W.data[:, base + dh:base + 2 * dh] = W.data[:, base:base + dh]
    return attn


def test_c2_differential_attention_invariants(capsys):
    rng = np.random.default_rng(0)
    model = SleepDiffFormer(ExperimentConfig())
    model.eval()
    sink = []
    model.encode_epochs(rng.standard_normal((100, 3000)), rng.standard_normal((100, 3000)), sink)
    worst_a = max(float(np.abs(r.map.sum(-1) - (1 - r.lam)).max()) for r in explode_records(sink))
    layers = {c.layer for c in sink}

    d, heads = 32, 4
    dh = d // (2 * heads)
    attn0 = _controlled_attention(d, heads, 0.0, tie_halves=False)
    xq, xkv = rng.standard_normal((3, 6, d)), rng.standard_normal((3, 7, d))
    cap = []
    out0 = attn0(Tensor(xq), Tensor(xkv), cap).data
    Q, K, V = xq @ attn0.W_q.data, xkv @ attn0.W_k.data, xkv @ attn0.W_v.data
    ref_heads, ref_maps = [], []
    for h in range(heads):
        c = slice(2 * dh * h, 2 * dh * (h + 1))
        a = _softmax(Q[..., c][..., :dh] @ np.swapaxes(K[..., c][..., :dh], -1, -2) / math.sqrt(dh))
        ref_maps.append(a)
        ref_heads.append(a @ V[..., c])
    ref = np.concatenate(ref_heads, -1) @ attn0.W_o.data
    worst_b = max(float(np.abs(out0 - ref).max()), float(np.abs(cap[0].maps - np.stack(ref_maps, 1)).max()))

    attn1 = _controlled_attention(d, heads, 1.0, tie_halves=True, seed=1)
    cap1 = []
    attn1(Tensor(xq), Tensor(xkv), cap1)
    exact_zero = bool(np.all(cap1[0].maps == 0.0)) and float(cap1[0].lam.max()) == 1.0

    ok = worst_a <= ROW_SUM_TOL and worst_b <= STANDARD_REF_TOL and exact_zero
    report(capsys, 2, ok, f"(a) row-sum err {worst_a:.1e} over 100 inputs, layers {sorted(layers)}; "
                          f"(b) lambda=0 vs standard {worst_b:.1e}; (c) tied, lambda=1 exact zero: {exact_zero}")
    assert ok


def test_c3_ablation_isolation(capsys):
    rng = np.random.default_rng(3)
    cfg = ExperimentConfig()
    no_ca = SleepDiffFormer(cfg.replace(flags=AblationFlags(ca=False)))
    no_ca.eval()
    eeg = rng.standard_normal((4, 3000))
    a = no_ca.encode_epochs(eeg, rng.standard_normal((4, 3000)))
    b = no_ca.encode_epochs(eeg, 10 * rng.standard_normal((4, 3000)))
    isolated = a[0].data.tobytes() == b[0].data.tobytes() and a[1].data.tobytes() == b[1].data.tobytes()

    default = SleepDiffFormer(cfg)
    explicit = SleepDiffFormer(cfg.replace(flags=AblationFlags(da=True, se=True, ca=True, fa=True, id=True)))
    pd, pe = dict(default.named_parameters()), dict(explicit.named_parameters())
    same_params = pd.keys() == pe.keys() and all(pd[k].data.tobytes() == pe[k].data.tobytes() for k in pd)
    x = rng.standard_normal((1, 3, 2, 3000))
    default.eval()
    explicit.eval()
    same_out = default(x).logits.data.tobytes() == explicit(x).logits.data.tobytes()
    ok = isolated and same_params and same_out
    report(capsys, 3, ok, f"CA off: EEG stream independent of EOG bitwise={isolated}; "
                          f"all flags on == default: params={same_params}, forward={same_out}")
    assert ok


def test_c4_overfit_one_batch(capsys, synthetic_domains):
    cfg = ExperimentConfig(batch=4, lr=OVERFIT_LR, **REDUCED)
    store = DomainStore(synthetic_domains)
    pools = {d: store.load(d) for d in cfg.sources}
    batch = build_batch(pools, {d: [0] for d in cfg.sources})
    model = SleepDiffFormer(cfg)
    opt = make_optimizer(model, cfg)
    t0 = time.perf_counter()
    reached = None
    acc = 0.0
    for step in range(1, OVERFIT_STEPS + 1):
        train_step(model, batch, cfg, opt)
        if step % 5 == 0 or step == OVERFIT_STEPS:
            acc = 100.0 * float(np.mean(model.predict(batch.x) == batch.y))
            if acc == 100.0:
                reached = step
                break
    elapsed = time.perf_counter() - t0
    ok = reached is not None and elapsed < OVERFIT_BUDGET_S
    report(capsys, 4, ok, f"4 sequences, lr {OVERFIT_LR}, d=32 L=2: 100% train accuracy at step {reached} "
                          f"(last {acc:.1f}%), {elapsed:.0f}s")
    assert ok


def _hand_metrics(cm):
    total = sum(sum(r) for r in cm)
    acc = 100.0 * sum(cm[i][i] for i in range(5)) / total
    f1 = []
    for c in range(5):
        tp = cm[c][c]
        fp = sum(cm[r][c] for r in range(5)) - tp
        fn = sum(cm[c]) - tp
        f1.append(0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))
    return acc, 100.0 * sum(f1) / 5


class _FixedPredictor:
    """Stands in for a model: returns one-hot logits of preset predictions."""

    def __init__(self, pred):
        self.pred, self.pos, self.training = pred, 0, True

    def eval(self):
        self.training = False

    def train(self, mode=True):
        self.training = mode

    def __call__(self, x):
        k = x.shape[0]
        p = self.pred[self.pos:self.pos + k]
        self.pos += k
        return type("Out", (), {"logits": Tensor(np.eye(5)[p])})()


def test_c7_metrics_oracle(capsys):
    from sleepdiff.data.sequences import SequenceSet

    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10):
        y = rng.integers(0, 5, (12, 20))
        pred = np.where(rng.random((12, 20)) < 0.6, y, rng.integers(0, 5, (12, 20)))
        cm = [[0] * 5 for _ in range(5)]
        for t, p in zip(y.ravel(), pred.ravel()):
            cm[t][p] += 1
        acc, mf1 = _hand_metrics(cm)
        target = SequenceSet(np.zeros((12, 1, 2, 1), np.float32), y, 0)
        r = evaluate(_FixedPredictor(pred), target)
        worst = max(worst, abs(r.accuracy - acc), abs(r.macro_f1 - mf1))
    avg_acc, avg_mf1 = average_rows(list(zip(TABLE_ACC, TABLE_MF1)))
    printed = (round(float(avg_acc), 2), round(float(avg_mf1), 2))
    ok = worst <= METRIC_TOL and printed == PRINTED_AVG
    report(capsys, 7, ok, f"10 random confusion matrices, worst diff {worst:.1e}; "
                          f"table averages {printed} vs printed {PRINTED_AVG}")
    assert ok


def test_c8_preprocessing_spectra(capsys):
    def amp(x):
        core = x[len(x) // 5: -len(x) // 5]
        return math.sqrt(2) * core.std()

    t100 = np.arange(6000) / 100
    t200 = np.arange(12000) / 200
    a10 = amp(bandpass(np.sin(2 * np.pi * 10 * t100), 100))
    db50 = 20 * math.log10(amp(bandpass(np.sin(2 * np.pi * 50 * t200), 200)))
    dc = bandpass(np.full(6000, 2.0), 100)
    db_dc = 20 * math.log10(np.abs(dc[1000:-1000]).max() / 2.0)
    y = resample(np.sin(2 * np.pi * 5 * t200), 200, 100)
    halves = len(y) * 2 == len(t200)
    a5 = amp(y)
    ok = (abs(a10 - 1) <= PASSBAND_TOL and db50 <= -STOPBAND_DB and db_dc <= -STOPBAND_DB
          and halves and abs(a5 - 1) <= RESAMPLE_TOL)
    report(capsys, 8, ok, f"10 Hz gain {a10:.4f}; 50 Hz {db50:.1f} dB; DC {db_dc:.1f} dB; "
                          f"200->100 Hz length halved={halves}, 5 Hz gain {a5:.4f}")
    assert ok


def test_c9_serialization(capsys, tmp_path):
    rng = np.random.default_rng(9)
    recs = [Recording(rng.standard_normal((n, 2, 3000)).astype(np.float32), rng.integers(0, 5, n), d)
            for n, d in ((3, 0), (5, 4))]
    back = read_container(write_container(tmp_path / "r.slpd", recs))
    slpd_ok = all(a.signals.tobytes() == b.signals.tobytes() and a.labels.tobytes() == b.labels.tobytes()
                  and a.domain_id == b.domain_id for a, b in zip(recs, back))

    cfg = ExperimentConfig(**REDUCED)
    model = SleepDiffFormer(cfg)
    opt = make_optimizer(model, cfg)
    probe = rng.standard_normal((2, 20, 2, 3000)).astype(np.float32)
    from sleepdiff.harness.batching import DomainBatch
    batch = DomainBatch(probe, rng.integers(0, 5, (2, 20)), np.array([1, 2]), np.array([0, 0]))
    train_step(model, batch, cfg, opt)
    model.eval()
    before = model(probe)
    path = save_checkpoint(model, opt, cfg, tmp_path / "m.sdfm")
    loaded, _, _ = load_checkpoint(path)
    loaded.eval()
    after = loaded(probe)
    fwd_ok = (before.logits.data.tobytes() == after.logits.data.tobytes()
              and before.recon.data.tobytes() == after.recon.data.tobytes())
    resaved = save_checkpoint(*load_checkpoint(path), tmp_path / "m2.sdfm").read_bytes()
    sdfm_ok = resaved == path.read_bytes()
    ok = slpd_ok and fwd_ok and sdfm_ok
    report(capsys, 9, ok, f"SLPD round trip bitwise={slpd_ok}; SDFM re-save bitwise={sdfm_ok}; "
                          f"loaded forward bitwise={fwd_ok}")
    assert ok


def test_c10_attention_export(capsys, tmp_path):
    rng = np.random.default_rng(10)
    model = SleepDiffFormer(ExperimentConfig())
    seq = rng.standard_normal((20, 2, 3000)).astype(np.float32)
    index = load_index(export_attention(model, seq, tmp_path))
    dsa = [e for e in index if e["kind"] == "dsa"]
    worst = 0.0
    for e in dsa:
        m = np.loadtxt(tmp_path / e["file"], delimiter=",")
        worst = max(worst, float(np.abs(m.sum(1) - (1 - e["lambda"])).max()))
    files = [e["file"] for e in index]
    on_disk = {p.name for p in tmp_path.glob("*.csv")}
    complete = len(files) == len(set(files)) and set(files) == on_disk
    keys = all(set(e) >= {"layer", "head", "modality", "epoch", "lambda"} for e in index)
    combos = {(e["layer"], e["head"], e["modality"], e["epoch"]) for e in dsa}
    ok = len(dsa) == DSA_MAPS_PER_SEQUENCE and len(combos) == DSA_MAPS_PER_SEQUENCE and worst <= ROW_SUM_TOL \
        and complete and keys
    report(capsys, 10, ok, f"{len(dsa)} DSA maps, row-sum err {worst:.1e}, index entries {len(index)} "
                           f"each file once={complete}")
    assert ok


@pytest.fixture(scope="module")
def loocv_runs(synthetic_domains):
    store = DomainStore(synthetic_domains)
    base = ExperimentConfig(epochs=LOOCV_EPOCHS, **REDUCED)
    runs = {}
    for fa in (True, False):
        cfg = base.replace(flags=AblationFlags(fa=fa))
        runs[fa] = run_loocv(cfg, store, seeds=LOOCV_SEEDS, measure_alignment=True, echo=print)
    return runs


@pytest.mark.slow
def test_c5_synthetic_loocv(capsys, loocv_runs):
    folds = loocv_runs[True].folds
    worst_acc = min(f.report.accuracy for f in folds)
    worst_mf1 = min(f.report.macro_f1 for f in folds)
    slowest = max(f.seconds for f in folds)
    per_target = {t: (a, m) for t, a, m in loocv_runs[True].rows()}
    ok = all(f.report.accuracy >= LOOCV_MIN_ACC and f.report.macro_f1 >= LOOCV_MIN_MF1 for f in folds) \
        and slowest < LOOCV_RUN_BUDGET_S
    report(capsys, 5, ok, f"{len(folds)} runs (5 targets x {len(LOOCV_SEEDS)} seeds, d=32 L=2, {LOOCV_EPOCHS} epochs): "
                          f"min ACC {worst_acc:.2f}, min MF1 {worst_mf1:.2f}, slowest run {slowest:.0f}s; "
                          + ", ".join(f"t{t} {a:.1f}/{m:.1f}" for t, (a, m) in per_target.items()))
    assert ok


@pytest.mark.slow
def test_c6_alignment_direction(capsys, loocv_runs):
    on = {(f.target, f.seed): f.source_alignment for f in loocv_runs[True].folds}
    off = {(f.target, f.seed): f.source_alignment for f in loocv_runs[False].folds}
    wins = {t: sum(on[(t, s)] < off[(t, s)] for s in LOOCV_SEEDS) for t in sorted({k[0] for k in on})}
    ok = all(w >= FA_MIN_WINS for w in wins.values())
    ratio = np.median([on[k] / off[k] for k in on])
    report(capsys, 6, ok, f"FA-on L_epo lower in seeds per target {wins} (need >= {FA_MIN_WINS}/3); "
                          f"median on/off ratio {ratio:.3f}")
    assert ok
