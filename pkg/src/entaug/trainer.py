"""Training orchestration: epochs, comparisons, throughput bench, checkpoints.

Batches run strictly sequentially; all randomness is keyed off the run
seed so equal configurations reproduce bit-identical weights, metrics,
and checkpoints.  ``strict_serial`` additionally zeroes wall-clock
fields so the exported files are byte-stable across runs.
"""

import json
import multiprocessing
import struct
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import figures, metrics, numcore, policy
from . import rng as rng_mod
from .errors import CheckpointError, ConfigError
from .model import ARCHITECTURES, Network, OptimizerConfig, Sgd, build_network
from .numcore import LossConfig

AUG_MODES = ("none", "baseline_only", "random_magnitude", "entaugment")

CHECKPOINT_MAGIC = b"EACKPT01"

LOSS_ARMS = ("ce", "ce+ent")
FULL_MATRIX = tuple(
    (loss, mode) for loss in LOSS_ARMS for mode in ("baseline_only", "random_magnitude", "entaugment")
)


@dataclass(frozen=True)
class RunConfig:
    """Flat run description; every field maps to one CLI flag / config key."""

    dataset: str = "synth"
    data_dir: str = ""
    subset: int = 10000
    test_subset: int = 2000
    arch: str = "tiny-cnn"
    epochs: int = 20
    batch_size: int = 128
    lr0: float = 0.05
    momentum: float = 0.9
    nesterov: bool = False
    weight_decay: float = 5e-4
    schedule: str = "cosine"
    milestones: tuple = ()
    gamma: float = 0.2
    use_ent_loss: bool = False
    ent_weight: float = 1.0
    sign_mode: str = numcore.SIGN_ENTROPY_MIN
    aug_mode: str = "entaugment"
    entropy_source: str = policy.SOURCE_CACHED
    seed: int = 0
    data_seed: int = 0  # subset selection only; fixed across seeds so arms stay paired
    out_dir: str = "runs/run"
    strict_serial: bool = False
    net_dtype: str = "float32"
    hidden: int = 64
    pad: int = 4
    fill: int = 128

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            lr0=self.lr0,
            momentum=self.momentum,
            nesterov=self.nesterov,
            weight_decay=self.weight_decay,
            schedule=self.schedule,
            total_epochs=self.epochs,
            milestones=tuple(self.milestones),
            gamma=self.gamma,
        )

    def loss_config(self) -> LossConfig:
        return LossConfig(self.use_ent_loss, self.ent_weight, self.sign_mode)


def validate_config(cfg: RunConfig) -> None:
    """Collect every configuration problem up front; nothing runs on failure."""
    problems = []
    if cfg.dataset not in data_mod.DATASET_NAMES:
        problems.append(f"dataset {cfg.dataset!r} not in {data_mod.DATASET_NAMES}")
    if cfg.arch not in ARCHITECTURES:
        problems.append(f"arch {cfg.arch!r} not in {ARCHITECTURES}")
    if cfg.epochs < 1:
        problems.append("epochs must be >= 1")
    if cfg.batch_size < 1:
        problems.append("batch_size must be >= 1")
    if cfg.subset < 1:
        problems.append("subset must be >= 1")
    if cfg.aug_mode not in AUG_MODES:
        problems.append(f"aug_mode {cfg.aug_mode!r} not in {AUG_MODES}")
    if cfg.entropy_source not in policy.ENTROPY_SOURCES:
        problems.append(f"entropy_source {cfg.entropy_source!r} not in {policy.ENTROPY_SOURCES}")
    if cfg.net_dtype not in ("float32", "float64"):
        problems.append(f"net_dtype {cfg.net_dtype!r} must be float32 or float64")
    if not 0 <= cfg.fill <= 255:
        problems.append("fill must be a byte value")
    try:
        cfg.optimizer_config()
        cfg.loss_config()
    except Exception as exc:  # collected, not raised piecemeal
        problems.append(str(exc))
    if problems:
        raise ConfigError("; ".join(problems))


@dataclass
class TrainResult:
    checkpoint_path: Path
    records: list
    net: Network
    cache: policy.EntropyCache
    meta: dict


def _load_splits(cfg: RunConfig):
    train_ds, test_ds = data_mod.get_dataset(cfg.dataset, cfg.data_dir or None)
    if cfg.subset and cfg.subset < len(train_ds):
        train_ds = data_mod.subset(train_ds, cfg.subset, cfg.data_seed)
    if cfg.test_subset and cfg.test_subset < len(test_ds):
        test_ds = data_mod.subset(test_ds, cfg.test_subset, cfg.data_seed)
    return train_ds, test_ds


def _build_net(cfg: RunConfig, train_ds) -> Network:
    h, w, c = train_ds.images.shape[1:]
    return build_network(
        cfg.arch, h, w, c, train_ds.k,
        rng_mod.stream(cfg.seed, rng_mod.STREAM_INIT),
        dtype=np.dtype(cfg.net_dtype), hidden=cfg.hidden,
    )


def _test_accuracy(net: Network, test_ds, batch_size: int = 512) -> float:
    parts = []
    for start in range(0, len(test_ds), batch_size):
        stop = min(start + batch_size, len(test_ds))
        x = data_mod.normalize(test_ds.images[start:stop], test_ds.mean, test_ds.std, dtype=net.dtype)
        parts.append(net.forward(x, mode="eval").logits)
    return metrics.accuracy(np.concatenate(parts), test_ds.labels)


def train(cfg: RunConfig) -> TrainResult:
    """Run the configured training loop and write metrics, figures, checkpoints."""
    validate_config(cfg)
    train_ds, test_ds = _load_splits(cfg)
    net = _build_net(cfg, train_ds)
    sgd = Sgd(cfg.optimizer_config())
    loss_cfg = cfg.loss_config()
    cache = policy.EntropyCache(len(train_ds))
    fresh = cfg.entropy_source == policy.SOURCE_FRESH

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    normalizer = lambda px: data_mod.normalize(px, train_ds.mean, train_ds.std, dtype=net.dtype)

    records = []
    aug_eval_calls = 0
    samples_per_epoch = []
    n = len(train_ds)
    for epoch in range(cfg.epochs):
        t0 = time.monotonic()
        mean_h, mean_mag = cache.snapshot_means()
        order = rng_mod.stream(cfg.seed, rng_mod.STREAM_SHUFFLE, epoch).permutation(n)
        loss_sum = ce_sum = 0.0
        seen = 0
        for start in range(0, n, cfg.batch_size):
            idxs = order[start : start + cfg.batch_size]
            labels = train_ds.labels[idxs]
            imgs = [train_ds.image(int(i)) for i in idxs]
            if cfg.aug_mode != "none":
                imgs = [
                    data_mod.baseline_augment(img, rng_mod.baseline_stream(cfg.seed, epoch, int(i)), cfg.pad)
                    for img, i in zip(imgs, idxs)
                ]
            if cfg.aug_mode == "entaugment":
                triples = list(zip(imgs, labels, (int(i) for i in idxs)))
                before = net.eval_calls
                imgs = policy.augment_batch(
                    triples, cache, cfg.entropy_source,
                    model=net if fresh else None,
                    normalizer=normalizer if fresh else None,
                    seed=cfg.seed, epoch=epoch, fill=cfg.fill,
                )
                aug_eval_calls += net.eval_calls - before
            elif cfg.aug_mode == "random_magnitude":
                triples = list(zip(imgs, labels, (int(i) for i in idxs)))
                imgs = policy.augment_batch_random(triples, seed=cfg.seed, epoch=epoch, fill=cfg.fill)
            x = normalizer(np.stack([im.pixels for im in imgs]))
            trace = net.forward(x, mode="train")
            logits64 = np.asarray(trace.logits, dtype=np.float64)
            total, ce, grads = numcore.batch_loss_and_grad(logits64, labels, loss_cfg)
            param_grads = net.backward(trace, grads / len(idxs))
            sgd.step(net, param_grads, epoch)
            cache.update_batch(idxs, numcore.softmax_rows(logits64), epoch)
            loss_sum += float(total.sum())
            ce_sum += float(ce.sum())
            seen += len(idxs)
        samples_per_epoch.append(seen)
        wall = 0.0 if cfg.strict_serial else round(time.monotonic() - t0, 3)
        records.append(
            metrics.RunRecord(
                epoch=epoch,
                train_loss=loss_sum / seen,
                train_ce=ce_sum / seen,
                test_accuracy=_test_accuracy(net, test_ds),
                mean_norm_entropy=mean_h,
                mean_magnitude=mean_mag,
                epoch_wall_seconds=wall,
            )
        )
        save_checkpoint(out_dir / "checkpoint.bin", cfg, train_ds, net, sgd, cache, epoch)

    final_path = out_dir / "final_checkpoint.bin"
    save_checkpoint(final_path, cfg, train_ds, net, sgd, cache, cfg.epochs - 1)
    metrics.export_csv(records, out_dir / "metrics.csv")
    metrics.export_json(records, out_dir / "metrics.json")
    figures.run_curves(records, out_dir / "run_curves.png")
    meta = {
        "config": asdict(cfg),
        "samples_per_epoch": samples_per_epoch,
        "aug_eval_calls": aug_eval_calls,
        "train_size": n,
        "test_size": len(test_ds),
        "magnitude_provenance": (
            "fresh forward pass on clean inputs" if fresh else "softmax outputs cached from the previous training pass"
        ),
    }
    with open(out_dir / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return TrainResult(final_path, records, net, cache, meta)


# --- checkpoint container -----------------------------------------------------


def save_checkpoint(path, cfg: RunConfig, train_ds, net: Network, sgd: Sgd, cache, epoch: int) -> None:
    """Versioned binary container: config echo, 64-bit weights and velocity,
    epoch counter, and the entropy cache."""
    if sgd.velocity is None:
        sgd._init_velocity(net)
    arrays = {}
    for name, arr in net.state_arrays().items():
        arrays[f"net.{name}"] = arr.astype(np.float64)
    for i, layer_vel in enumerate(sgd.velocity):
        for name, arr in layer_vel.items():
            arrays[f"vel.layer{i}.{name}"] = arr.astype(np.float64)
    arrays.update(cache.to_arrays())
    h, w, c = train_ds.images.shape[1:]
    manifest = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        manifest.append(
            {"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape), "offset": offset, "nbytes": arr.nbytes}
        )
        offset += arr.nbytes
    header = {
        "version": 1,
        "config": asdict(cfg),
        "epoch": epoch,
        "input_shape": [h, w, c],
        "k": train_ds.k,
        "arrays": manifest,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in sorted(arrays):
            fh.write(np.ascontiguousarray(arrays[name]).tobytes())


def load_checkpoint(path) -> dict:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    if header.get("version") != 1:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    base = 12 + hlen
    arrays = {}
    for item in header["arrays"]:
        start = base + item["offset"]
        stop = start + item["nbytes"]
        if stop > len(raw):
            raise CheckpointError(f"{path}: truncated array {item['name']}")
        arrays[item["name"]] = np.frombuffer(raw[start:stop], dtype=item["dtype"]).reshape(item["shape"]).copy()
    return {"header": header, "arrays": arrays}


def restore_network(ckpt: dict) -> Network:
    """Rebuild the checkpointed network with its trained weights."""
    cfg = RunConfig(**{k: tuple(v) if k == "milestones" else v for k, v in ckpt["header"]["config"].items()})
    h, w, c = ckpt["header"]["input_shape"]
    net = build_network(
        cfg.arch, h, w, c, ckpt["header"]["k"],
        rng_mod.stream(cfg.seed, rng_mod.STREAM_INIT),
        dtype=np.dtype(cfg.net_dtype), hidden=cfg.hidden,
    )
    net.load_state({k[len("net."):]: v for k, v in ckpt["arrays"].items() if k.startswith("net.")})
    return net


def restore_cache(ckpt: dict) -> policy.EntropyCache:
    return policy.EntropyCache.from_arrays(ckpt["arrays"])


# --- comparison harness --------------------------------------------------------


def arm_name(loss: str, mode: str) -> str:
    return f"{loss}|{mode}"


def _run_arm_impl(cfg_dict: dict) -> dict:
    cfg = RunConfig(**{k: tuple(v) if k == "milestones" else v for k, v in cfg_dict.items()})
    result = train(cfg)
    train_ds, _ = _load_splits(cfg)
    ece = metrics.empirical_ce(result.net, train_ds.images, train_ds.labels, train_ds.mean, train_ds.std)
    return {
        "final_accuracy": result.records[-1].test_accuracy,
        "final_empirical_ce": ece,
        "final_mean_norm_entropy": result.records[-1].mean_norm_entropy,
        "checkpoint": str(result.checkpoint_path),
        "magnitudes": [r.mean_magnitude for r in result.records],
    }


def _run_arm_job(payload) -> dict:
    """One comparison run; executed in-process or in a forked worker."""
    cfg_dict, blas_threads = payload
    if blas_threads:
        try:
            from threadpoolctl import threadpool_limits
        except ImportError:
            threadpool_limits = None
        if threadpool_limits is not None:
            with threadpool_limits(limits=blas_threads):
                return _run_arm_impl(cfg_dict)
    return _run_arm_impl(cfg_dict)


def compare(cfg_base: RunConfig, seeds: list, arms=None, out_dir=None, workers: int = 1) -> dict:
    """Run a {loss} x {augmentation mode} matrix across seeds and aggregate.

    For each run the final test accuracy, final train-set empirical CE,
    and final mean normalized entropy are collected; medians, means, and
    stds are reported per arm, and per-arm mean magnitude trajectories
    are written as CSV and PNG.  ``workers`` > 1 distributes whole runs
    over forked processes, each capped to one BLAS thread when
    threadpoolctl is available; every run is internally serial and
    seed-determined, so a sweep is reproducible for a fixed workers
    setting.  BLAS reduction order differs between thread counts, so
    serial and parallel sweeps can differ at machine precision.
    """
    if len(seeds) < 3:
        raise ConfigError(f"compare needs >= 3 seeds, got {len(seeds)}")
    arms = list(arms) if arms is not None else list(FULL_MATRIX)
    for loss, mode in arms:
        if loss not in LOSS_ARMS or mode not in AUG_MODES:
            raise ConfigError(f"unknown arm ({loss}, {mode})")
    out_dir = Path(out_dir) if out_dir else Path(cfg_base.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _load_splits(cfg_base)  # materialize any generated dataset before workers race for it

    jobs = []
    for loss, mode in arms:
        for seed in seeds:
            run_cfg = replace(
                cfg_base,
                seed=int(seed),
                use_ent_loss=(loss == "ce+ent"),
                aug_mode=mode,
                out_dir=str(out_dir / arm_name(loss, mode).replace("|", "_") / f"seed{seed}"),
            )
            jobs.append((asdict(run_cfg), 1 if workers > 1 else None))
    if workers > 1 and "fork" in multiprocessing.get_all_start_methods():
        with multiprocessing.get_context("fork").Pool(workers) as pool:
            run_outputs = pool.map(_run_arm_job, jobs)
    else:
        run_outputs = [_run_arm_job(job) for job in jobs]

    results = {}
    trajectories = {}
    job_iter = iter(run_outputs)
    for loss, mode in arms:
        name = arm_name(loss, mode)
        per_seed = {"final_accuracy": [], "final_empirical_ce": [], "final_mean_norm_entropy": [],
                    "checkpoints": [], "seeds": []}
        mag_series = []
        for seed in seeds:
            out = next(job_iter)
            per_seed["final_accuracy"].append(out["final_accuracy"])
            per_seed["final_empirical_ce"].append(out["final_empirical_ce"])
            per_seed["final_mean_norm_entropy"].append(out["final_mean_norm_entropy"])
            per_seed["checkpoints"].append(out["checkpoint"])
            per_seed["seeds"].append(int(seed))
            mag_series.append(out["magnitudes"])
        trajectories[name] = np.mean(mag_series, axis=0).tolist()
        results[name] = {
            "per_seed": per_seed,
            "summary": {
                key: {
                    "median": float(np.median(per_seed[key])),
                    "mean": float(np.mean(per_seed[key])),
                    "std": float(np.std(per_seed[key])),
                }
                for key in ("final_accuracy", "final_empirical_ce", "final_mean_norm_entropy")
            },
        }

    report = {"seeds": [int(s) for s in seeds], "arms": results, "magnitude_trajectories": trajectories}
    with open(out_dir / "comparison.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "comparison.csv", "w") as fh:
        fh.write("arm,metric,median,mean,std\n")
        for name, arm in results.items():
            for key, stats in arm["summary"].items():
                fh.write(f"{name},{key},{stats['median']!r},{stats['mean']!r},{stats['std']!r}\n")
    with open(out_dir / "magnitude_trajectories.csv", "w") as fh:
        names = list(trajectories)
        fh.write("epoch," + ",".join(names) + "\n")
        for e in range(cfg_base.epochs):
            fh.write(str(e) + "," + ",".join(repr(trajectories[n][e]) for n in names) + "\n")
    figures.magnitude_trajectories(trajectories, out_dir / "magnitude_trajectories.png")
    return report


# --- throughput bench -----------------------------------------------------------


def bench_throughput(cfg: RunConfig, n_batches: int, warmup: int = 5, out_dir=None) -> dict:
    """Time the augmentation stage alone for the three magnitude policies.

    The cache is pre-populated with seeded uniform magnitudes so the
    cached path sees mid-training-like values rather than all zeros.
    """
    if n_batches < 10:
        raise ConfigError(f"bench needs n_batches >= 10, got {n_batches}")
    validate_config(cfg)
    train_ds, _ = _load_splits(cfg)
    net = _build_net(cfg, train_ds)
    normalizer = lambda px: data_mod.normalize(px, train_ds.mean, train_ds.std)
    cache = policy.EntropyCache(len(train_ds))
    mags = rng_mod.stream(cfg.seed, rng_mod.STREAM_BENCH).random(len(train_ds))
    cache.mag[...] = mags
    cache.norm_entropy[...] = 1.0 - mags

    modes = ("random_magnitude", "entaugment_cached", "entaugment_fresh")
    times = {m: [] for m in modes}
    eval_calls = {m: 0 for m in modes}
    n = len(train_ds)
    for b in range(warmup + n_batches):
        idxs = [(b * cfg.batch_size + j) % n for j in range(cfg.batch_size)]
        triples = [(train_ds.image(i), int(train_ds.labels[i]), i) for i in idxs]
        measured = b >= warmup
        for mode in modes:
            before = net.eval_calls
            t0 = time.perf_counter()
            if mode == "random_magnitude":
                policy.augment_batch_random(triples, seed=cfg.seed, epoch=b, fill=cfg.fill)
            elif mode == "entaugment_cached":
                policy.augment_batch(triples, cache, policy.SOURCE_CACHED, seed=cfg.seed, epoch=b, fill=cfg.fill)
            else:
                policy.augment_batch(
                    triples, cache, policy.SOURCE_FRESH,
                    model=net, normalizer=normalizer, seed=cfg.seed, epoch=b, fill=cfg.fill,
                )
            elapsed = time.perf_counter() - t0
            if measured:
                times[mode].append(elapsed)
                eval_calls[mode] += net.eval_calls - before
    report = {
        "n_batches": n_batches,
        "batch_size": cfg.batch_size,
        "modes": {
            m: {"mean_seconds": float(np.mean(times[m])), "p95_seconds": float(np.percentile(times[m], 95))}
            for m in modes
        },
        "eval_calls": eval_calls,
    }
    if out_dir:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "bench.csv", "w") as fh:
            fh.write("mode,mean_seconds,p95_seconds,eval_calls\n")
            for m in modes:
                fh.write(
                    f"{m},{report['modes'][m]['mean_seconds']!r},{report['modes'][m]['p95_seconds']!r},{eval_calls[m]}\n"
                )
        with open(out_dir / "bench.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        figures.bench_bars(report, out_dir / "bench.png")
    return report


def evaluate_checkpoint(ckpt_path, data_dir=None) -> dict:
    """Accuracy and empirical CE of a checkpointed model on its test split."""
    ckpt = load_checkpoint(ckpt_path)
    cfg = RunConfig(**{k: tuple(v) if k == "milestones" else v for k, v in ckpt["header"]["config"].items()})
    if data_dir:
        cfg = replace(cfg, data_dir=str(data_dir))
    net = restore_network(ckpt)
    _, test_ds = _load_splits(cfg)
    acc = _test_accuracy(net, test_ds)
    ece = metrics.empirical_ce(net, test_ds.images, test_ds.labels, test_ds.mean, test_ds.std)
    return {"checkpoint": str(ckpt_path), "test_accuracy": acc, "test_empirical_ce": ece, "epoch": ckpt["header"]["epoch"]}
