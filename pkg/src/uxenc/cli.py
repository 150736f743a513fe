"""Command-line surface.

Commands: gen-rirs, sim-train, sim-eval, fit-labels, pretrain,
finetune {asr|diar}, score, grad-check, inspect-ckpt.  Every command reads an
optional flat config file (``section.key = value``), applies flag overrides,
echoes the resolved configuration into its run directory, and exits 0 on
success or nonzero with a one-line ``error: <category>: <message>`` report.

All randomness flows from ``run.seed`` through named sub-streams; two runs of
any command with identical config and seed produce bit-identical artifacts.
``UXENC_THREADS`` caps the simulation worker pool.
"""

import argparse
import concurrent.futures
import os
import pathlib
import sys

import numpy as np

from . import acoustics, checkpoint, labels, metrics, mixsim, objectives
from . import diffkernel as dk
from .audio import read_wav
from .config import ConfigView, load_config, resolved_text
from .encoder import EncoderConfig, PretrainModel, sample_mask
from .errors import ConfigurationError, DataError, UxencError
from .finetune import (
    AsrHead,
    DiarHead,
    FinetuneHyper,
    HeadConfig,
    LayerWeights,
    diar_targets_for,
    finetune_loop,
    ids_to_text,
    pad_speakers,
    weighted_sum,
)
from .seeding import substream


def _max_workers():
    try:
        return max(1, int(os.environ.get("UXENC_THREADS", "1")))
    except ValueError:
        return 1


def _merge_config(args):
    values = {}
    if getattr(args, "config", None):
        values.update(load_config(args.config))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigurationError([f"--set {item!r}: expected key=value"])
        key, _, value = item.partition("=")
        values[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        values["run.seed"] = str(args.seed)
    if getattr(args, "out", None) is not None:
        values["paths.out"] = args.out
    return values


def _prepare_run_dir(view, default=None):
    out = view.get_path("paths.out", default=default, required=default is None)
    view.finalize()
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved.cfg").write_text(resolved_text(view.resolved()))
    return out


def _encoder_config(view):
    base = EncoderConfig()
    conv = []
    for i, (k, s, c) in enumerate(base.conv_spec):
        raw = view.get_str(f"encoder.conv{i}", default=f"{k},{s},{c}")
        try:
            conv.append(tuple(int(v) for v in raw.split(",")))
        except ValueError:
            view.errors.append(f"encoder.conv{i}: {raw!r} is not 'kernel,stride,channels'")
            conv.append((k, s, c))
    cfg = EncoderConfig(
        conv_spec=tuple(conv),
        model_dim=view.get_int("encoder.model_dim", base.model_dim, lo=1),
        n_heads=view.get_int("encoder.n_heads", base.n_heads, lo=1),
        n_cross_channel=view.get_int("encoder.n_cross_channel", base.n_cross_channel, lo=0),
        n_cross_frame=view.get_int("encoder.n_cross_frame", base.n_cross_frame, lo=0),
        ffn_dim=view.get_int("encoder.ffn_dim", base.ffn_dim, lo=1),
        mask_span=view.get_int("encoder.mask_span", base.mask_span, lo=1),
        mask_prob=view.get_float("encoder.mask_prob", base.mask_prob, lo=0.0, hi=1.0),
        logit_scale=view.get_float("encoder.logit_scale", base.logit_scale),
        n_clusters=view.get_int("encoder.n_clusters", base.n_clusters, lo=2),
        proj_dim=view.get_int("encoder.proj_dim", base.proj_dim, lo=1),
        rel_pos_window=view.get_int("encoder.rel_pos_window", base.rel_pos_window, lo=1),
        channel_first=view.get_bool("encoder.channel_first", base.channel_first),
    )
    return cfg


def _pretrain_sim_config(view):
    base = mixsim.PretrainSimConfig()
    return mixsim.PretrainSimConfig(
        p_interference=view.get_float("sim.p_interference", base.p_interference),
        p_noise=view.get_float("sim.p_noise", base.p_noise),
        c_min=view.get_int("sim.c_min", base.c_min, lo=1),
        c_max=view.get_int("sim.c_max", base.c_max, lo=1),
        l_min=view.get_float("sim.l_min", base.l_min),
        l_max=view.get_float("sim.l_max", base.l_max),
        sir_range_db=(view.get_float("sim.sir_lo", base.sir_range_db[0]),
                      view.get_float("sim.sir_hi", base.sir_range_db[1])),
        snr_range_db=(view.get_float("sim.snr_lo", base.snr_range_db[0]),
                      view.get_float("sim.snr_hi", base.snr_range_db[1])),
        batch_size=view.get_int("sim.batch_size", base.batch_size, lo=1),
        n_samples=view.get_int("sim.n_samples", base.n_samples, lo=400),
    )


def _eval_sim_config(view, task):
    base = (mixsim.EvalSimConfig.for_asr() if task == "asr"
            else mixsim.EvalSimConfig.for_diarization())
    return mixsim.EvalSimConfig(
        rt60_range=(view.get_float("eval.rt60_lo", base.rt60_range[0]),
                    view.get_float("eval.rt60_hi", base.rt60_range[1])),
        sir_range_db=(view.get_float("eval.sir_lo", base.sir_range_db[0]),
                      view.get_float("eval.sir_hi", base.sir_range_db[1])),
        snr_range_db=(view.get_float("eval.snr_lo", base.snr_range_db[0]),
                      view.get_float("eval.snr_hi", base.snr_range_db[1])),
        count=view.get_int("eval.count", base.count, lo=1),
        array_radius=view.get_float("eval.array_radius", base.array_radius),
        n_perimeter=view.get_int("eval.n_perimeter", base.n_perimeter, lo=1),
        center_mic=view.get_bool("eval.center_mic", base.center_mic),
        max_order=view.get_int("eval.max_order", base.max_order, lo=0),
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen_rirs(args):
    view = ConfigView(_merge_config(args))
    seed = view.get_int("run.seed", 0)
    channels = view.get_str("rirs.channels", "2,3,4")
    entries = view.get_int("rirs.entries", 20, lo=1)
    sources = view.get_int("rirs.sources", 3, lo=1)
    max_order = view.get_int("rirs.max_order", acoustics.DEFAULT_MAX_ORDER, lo=0)
    try:
        channel_counts = [int(c) for c in channels.split(",")]
    except ValueError:
        view.errors.append(f"rirs.channels: {channels!r} is not a comma list of ints")
        channel_counts = []
    out = _prepare_run_dir(view)
    written = acoustics.generate_rir_bank(
        out, seed, channel_counts, entries, sources_per_entry=sources,
        max_order=max_order)
    print(f"wrote {len(written)} impulse responses to {out}")
    return 0


def _load_clean_pool(manifest, n_samples, seed):
    records = mixsim.read_manifest(manifest)
    pool = []
    for i, rec in enumerate(records):
        utt = mixsim.load_clean_utterance(rec, n_samples=n_samples,
                                          rng=substream(seed, "sim", 900000 + i))
        pool.append(utt)
    return pool


def _load_noises(manifest):
    waves = []
    for rec in mixsim.read_manifest(manifest):
        _, wave = read_wav(rec["path"])
        if wave.ndim == 2:
            wave = wave[0]
        waves.append(wave.astype(np.float64))
    return waves


def cmd_sim_train(args):
    view = ConfigView(_merge_config(args))
    seed = view.get_int("run.seed", 0)
    cfg = _pretrain_sim_config(view)
    n_batches = view.get_int("sim.batches", 4, lo=1)
    clean_manifest = view.get_path("paths.clean_manifest", required=True, must_exist=True)
    noise_manifest = view.get_path("paths.noise_manifest", required=True, must_exist=True)
    rir_dir = view.get_path("paths.rir_bank", required=True, must_exist=True)
    out = _prepare_run_dir(view)

    cfg.validate()
    pool = _load_clean_pool(clean_manifest, cfg.n_samples, seed)
    noises = _load_noises(noise_manifest)
    bank = acoustics.load_rir_bank(rir_dir)
    shuffle = substream(seed, "shuffle")
    index = 0
    for b in range(n_batches):
        picks = shuffle.choice(len(pool), size=min(cfg.batch_size, len(pool)),
                               replace=False)
        batch = [pool[int(i)] for i in picks]
        examples = mixsim.simulate_pretrain_batch(
            batch, noises, bank, cfg, substream(seed, "sim", b))
        for ex in examples:
            mixsim.write_example(out, mixsim.example_stem(index), ex, task="pretrain")
            index += 1
    print(f"wrote {index} mixtures to {out}")
    return 0


def cmd_sim_eval(args):
    view = ConfigView(_merge_config(args))
    seed = view.get_int("run.seed", 0)
    task = args.task
    cfg = _eval_sim_config(view, task)
    if args.count is not None:
        cfg.count = args.count
    clean_manifest = view.get_path("paths.clean_manifest", required=True, must_exist=True)
    noise_manifest = view.get_path("paths.noise_manifest", required=True, must_exist=True)
    out = _prepare_run_dir(view)

    cfg.validate()
    pool = [mixsim.load_clean_utterance(rec) for rec in mixsim.read_manifest(clean_manifest)]
    speakers = sorted({u.speaker_id for u in pool})
    if len(speakers) < 2:
        raise DataError("eval simulation needs at least two distinct speakers")
    noises = _load_noises(noise_manifest)

    def simulate(j):
        rng = substream(seed, "sim", j)
        while True:
            i1, i2 = rng.integers(0, len(pool)), rng.integers(0, len(pool))
            if pool[int(i1)].speaker_id != pool[int(i2)].speaker_id:
                break
        noise = noises[int(rng.integers(0, len(noises)))]
        return j, mixsim.simulate_eval_utt(pool[int(i1)], pool[int(i2)], noise, cfg, rng)

    workers = _max_workers()
    results = []
    if workers == 1:
        results = [simulate(j) for j in range(cfg.count)]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool_exec:
            results = list(pool_exec.map(simulate, range(cfg.count)))
    for j, ex in sorted(results):
        mixsim.write_example(out, mixsim.example_stem(j), ex, task=task)
    print(f"wrote {cfg.count} {task} mixtures to {out}")
    return 0


def cmd_fit_labels(args):
    view = ConfigView(_merge_config(args))
    seed = view.get_int("run.seed", 0)
    n_clusters = view.get_int("labels.n_clusters", 32, lo=2)
    iters = view.get_int("labels.iters", 30, lo=1)
    max_utts = view.get_int("labels.max_utterances", 0, lo=0)
    clean_manifest = view.get_path("paths.clean_manifest", required=True, must_exist=True)
    out = _prepare_run_dir(view)

    records = mixsim.read_manifest(clean_manifest)
    if max_utts:
        records = records[:max_utts]
    feats = []
    for rec in records:
        utt = mixsim.load_clean_utterance(rec)
        feats.append(labels.frame_features(utt.wave))
    features = np.concatenate(feats, axis=0)
    codebook = labels.kmeans_fit(features, n_clusters, iters=iters,
                                 rng=substream(seed, "labels"))
    ckpt_path = out / "codebook.ckpt"
    checkpoint.save_checkpoint(
        ckpt_path, {"codebook.centroids": codebook.centroids},
        {"codebook.feature_spec": codebook.feature_spec,
         "codebook.n_clusters": str(codebook.n_clusters),
         "codebook.inertia": repr(codebook.inertia)})
    print(f"fit {n_clusters} clusters on {features.shape[0]} frames "
          f"(inertia {codebook.inertia:.3e}) -> {ckpt_path}")
    return 0


def load_codebook(path):
    tensors, config = checkpoint.load_checkpoint(path)
    if "codebook.centroids" not in tensors:
        raise DataError(f"{path} does not contain a codebook")
    return labels.Codebook(
        centroids=tensors["codebook.centroids"].astype(np.float64),
        feature_spec=config.get("codebook.feature_spec", labels.FEATURE_SPEC),
        inertia=float(config.get("codebook.inertia", "0.0")))


def save_encoder_checkpoint(path, model, extra_config=None):
    config = {f"encoder.{k}": v for k, v in model.cfg.to_dict().items()}
    config.update(extra_config or {})
    checkpoint.save_checkpoint(path, model.state_dict(), config)


def load_pretrain_model(path, dtype=np.float32):
    tensors, config = checkpoint.load_checkpoint(path)
    enc_keys = {k[len("encoder."):]: v for k, v in config.items()
                if k.startswith("encoder.")}
    cfg = EncoderConfig.from_dict(enc_keys)
    model = PretrainModel(cfg, seed=0, dtype=dtype)
    model.load_state_dict(tensors)
    return model


def load_encoder(path, dtype=np.float32):
    return load_pretrain_model(path, dtype=dtype).encoder


def cmd_pretrain(args):
    view = ConfigView(_merge_config(args))
    seed = view.get_int("run.seed", 0)
    sim_cfg = _pretrain_sim_config(view)
    enc_cfg = _encoder_config(view)
    total_steps = view.get_int("optim.total_steps", 500, lo=1)
    warmup = view.get_int("optim.warmup", max(1, total_steps // 10), lo=0)
    lr_peak = view.get_float("optim.lr_peak", 1e-3)
    grad_accum = view.get_int("optim.grad_accum", 1, lo=1)
    use_secondary_loss = view.get_bool("objective.bilabel", True)
    clean_manifest = view.get_path("paths.clean_manifest", required=True, must_exist=True)
    noise_manifest = view.get_path("paths.noise_manifest", required=True, must_exist=True)
    rir_dir = view.get_path("paths.rir_bank", required=True, must_exist=True)
    codebook_path = view.get_path("paths.codebook", required=True, must_exist=True)
    out = _prepare_run_dir(view)

    sim_cfg.validate()
    enc_cfg.validate()
    codebook = load_codebook(codebook_path)
    if codebook.n_clusters != enc_cfg.n_clusters:
        raise ConfigurationError(
            [f"encoder.n_clusters={enc_cfg.n_clusters} != codebook K={codebook.n_clusters}"])

    pool = _load_clean_pool(clean_manifest, sim_cfg.n_samples, seed)
    noises = _load_noises(noise_manifest)
    bank = acoustics.load_rir_bank(rir_dir)

    model = PretrainModel(enc_cfg, seed=seed)
    params = model.parameters()
    state = dk.AdamState()
    shuffle = substream(seed, "shuffle")
    curve_path = out / "pretrain_curve.csv"
    curve_path.write_text("step,split,metric\n")

    report_rows = []
    for step in range(1, total_steps + 1):
        lr = dk.lr_schedule(step, warmup, total_steps, lr_peak)
        step_loss = 0.0
        for micro in range(grad_accum):
            picks = shuffle.choice(len(pool), size=min(sim_cfg.batch_size, len(pool)),
                                   replace=False)
            batch = [pool[int(i)] for i in picks]
            examples = mixsim.simulate_pretrain_batch(
                batch, noises, bank, sim_cfg,
                substream(seed, "sim", step, micro))
            micro_losses = []
            for i, ex in enumerate(examples):
                targets = labels.bilabel_targets(ex, codebook)
                if not use_secondary_loss:
                    targets = labels.PseudoLabels(
                        primary=targets.primary,
                        secondary=np.full_like(targets.secondary, -1),
                        valid_secondary=np.zeros_like(targets.valid_secondary))
                t_frames = enc_cfg.frame_count(ex.n_samples)
                mask = sample_mask(t_frames, enc_cfg,
                                   substream(seed, "mask", step, micro, i))
                if mask.count == 0:
                    continue
                stack = model.encoder.encode(ex.wave, mask)
                loss, rep = objectives.infonce_bilabel(
                    stack, model.proj, model.label_emb, targets, mask,
                    enc_cfg.logit_scale)
                denom = rep.masked_count + rep.secondary_masked_count
                scaled = dk.mul(loss, 1.0 / max(1, denom * len(examples) * grad_accum))
                scaled.backward()
                micro_losses.append(rep)
            if micro_losses:
                step_loss += float(np.mean([r.mean_loss() for r in micro_losses]))
        dk.adam_step(params, state, lr)
        dk.zero_grads(params)
        step_loss /= grad_accum
        report_rows.append((step, step_loss))
        with open(curve_path, "a") as fh:
            fh.write(f"{step},train,{step_loss!r}\n")
        if step % 50 == 0 or step == 1 or step == total_steps:
            print(f"step {step:5d}  lr {lr:.2e}  loss/frame {step_loss:.4f}")

    ckpt_path = out / "encoder.ckpt"
    save_encoder_checkpoint(ckpt_path, model, {"run.seed": str(seed)})
    print(f"saved {ckpt_path}")
    return 0


def _read_dataset(directory):
    stems = mixsim.list_dataset(directory)
    return [mixsim.read_example(directory, stem) for stem in stems]


def cmd_finetune(args):
    view = ConfigView(_merge_config(args))
    seed = view.get_int("run.seed", 0)
    task = args.task
    head_cfg = HeadConfig(
        kind=task,
        hidden=view.get_int("head.hidden", 64, lo=1),
        layers=view.get_int("head.layers", 2 if task == "asr" else 1, lo=1),
        n_speakers=view.get_int("head.n_speakers", 2, lo=1),
    )
    hyper = FinetuneHyper(
        steps=view.get_int("optim.steps", 300, lo=0),
        lr=view.get_float("optim.lr", 1e-3),
        eval_every=view.get_int("optim.eval_every", 50, lo=1),
        strategy=view.get_str("finetune.strategy", "B"),
        seed=seed,
    )
    train_dir = view.get_path("paths.train_dir", required=True, must_exist=True)
    dev_dir = view.get_path("paths.dev_dir", required=True, must_exist=True)
    encoder_ckpt = view.get_path("paths.encoder_ckpt", required=True, must_exist=True)
    out = _prepare_run_dir(view)

    encoder = load_encoder(encoder_ckpt)
    train_examples = _read_dataset(train_dir)
    dev_examples = _read_dataset(dev_dir)
    curve_path = out / "finetune_curve.csv"
    curve_path.write_text("step,split,metric\n")
    result = finetune_loop(train_examples, dev_examples, encoder, head_cfg, hyper,
                           history_path=curve_path)

    tensors = {p.name: p.data for p in result.head.parameters()}
    tensors["layer_weights.logits"] = result.weights.logits.data
    config = {
        "head.kind": head_cfg.kind,
        "head.hidden": str(head_cfg.hidden),
        "head.layers": str(head_cfg.layers),
        "head.n_speakers": str(head_cfg.n_speakers),
        "head.vocab_size": str(head_cfg.vocab_size),
        "finetune.strategy": hyper.strategy,
        "finetune.n_layers": str(result.weights.n_layers),
        "finetune.n_channels": str(result.weights.n_channels),
        "paths.encoder_ckpt": str(encoder_ckpt),
        "finetune.best_metric": repr(result.best_metric),
        "finetune.best_step": str(result.best_step),
    }
    checkpoint.save_checkpoint(out / "head.ckpt", tensors, config)
    metric_name = "dev frame accuracy" if task == "diar" else "dev CTC loss"
    print(f"best {metric_name}: {result.best_metric:.4f} at step {result.best_step}")
    print(f"saved {out / 'head.ckpt'}")
    return 0


def load_head(path, encoder):
    tensors, config = checkpoint.load_checkpoint(path)
    head_cfg = HeadConfig(
        kind=config["head.kind"],
        hidden=int(config["head.hidden"]),
        layers=int(config["head.layers"]),
        n_speakers=int(config["head.n_speakers"]),
        vocab_size=int(config["head.vocab_size"]),
    )
    if head_cfg.kind == "diar":
        head = DiarHead(head_cfg, encoder.cfg.model_dim)
    else:
        head = AsrHead(head_cfg, encoder.cfg.model_dim)
    for p in head.parameters():
        if p.name not in tensors:
            raise DataError(f"head checkpoint is missing {p.name!r}")
        p.data = tensors[p.name]
    weights = LayerWeights.init(
        int(config["finetune.n_layers"]), int(config["finetune.n_channels"]),
        config["finetune.strategy"])
    weights.logits.data = tensors["layer_weights.logits"]
    return head, weights, head_cfg


def cmd_score(args):
    view = ConfigView(_merge_config(args))
    task = args.task
    out = _prepare_run_dir(view, default=pathlib.Path("."))
    report_path = out / f"score_{task}.csv"

    if task == "asr" and args.hyp:
        if not args.ref:
            raise ConfigurationError(["score --hyp also needs --ref"])
        hyp_map = _read_trn(pathlib.Path(args.hyp))
        ref_map = _read_trn(pathlib.Path(args.ref))
        rows = []
        pairs = []
        for utt in sorted(ref_map):
            if utt not in hyp_map:
                raise DataError(f"hypothesis file is missing utterance {utt!r}")
            pairs.append((hyp_map[utt], ref_map[utt]))
            rows.append((utt, metrics.wer(hyp_map[utt], ref_map[utt])))
        agg = metrics.corpus_wer(pairs)
        _write_rows(report_path, "utt,wer", rows)
        print(f"corpus WER {100.0 * agg:.2f}%")
        return 0

    if not args.model or not args.data:
        raise ConfigurationError(["score needs either --hyp/--ref (asr) or --model/--data"])
    _, head_config = checkpoint.load_checkpoint(args.model)
    enc_path = args.model_encoder or head_config.get("paths.encoder_ckpt")
    if not enc_path or not pathlib.Path(enc_path).exists():
        raise ConfigurationError(
            ["--model-encoder: encoder checkpoint not given and the head "
             "checkpoint's recorded path is unavailable"])
    encoder = load_encoder(pathlib.Path(enc_path))
    head, weights, head_cfg = load_head(pathlib.Path(args.model), encoder)
    if head_cfg.kind != task:
        raise ConfigurationError([f"head checkpoint is for {head_cfg.kind!r}, not {task!r}"])
    examples = _read_dataset(pathlib.Path(args.data))

    if task == "asr":
        rows = []
        pairs = []
        for stem, ex in zip(mixsim.list_dataset(args.data), examples):
            feats = weighted_sum([layer.detach() for layer in encoder.encode(ex.wave).layers],
                                 weights)
            log_probs = head.forward(feats).data
            hyp = ids_to_text(objectives.ctc_greedy_decode(log_probs))
            ref = ex.primary().transcript
            rows.append((stem, metrics.wer(hyp.split(), ref.split())))
            pairs.append((hyp, ref))
        agg = metrics.corpus_wer(pairs)
        _write_rows(report_path, "utt,wer", rows)
        print(f"corpus WER {100.0 * agg:.2f}%")
        return 0

    rows = []
    pairs = []
    for stem, ex in zip(mixsim.list_dataset(args.data), examples):
        feats = weighted_sum([layer.detach() for layer in encoder.encode(ex.wave).layers],
                             weights)
        probs = dk.sigmoid(head.forward(feats)).data
        target = pad_speakers(diar_targets_for(ex, encoder.cfg), head_cfg.n_speakers)
        breakdown = metrics.der_frames(probs > 0.5, target)
        acc = metrics.frame_accuracy(probs > 0.5, target)
        rows.append((stem, breakdown.der, acc))
        pairs.append((probs > 0.5, target))
    agg = metrics.corpus_der(pairs)
    _write_rows(report_path, "utt,der,frame_accuracy", rows)
    print(f"corpus DER {100.0 * agg.der:.2f}%  "
          f"(miss {agg.miss} fa {agg.false_alarm} conf {agg.confusion} "
          f"/ {agg.total_speech_frames} frames)")
    return 0


def _read_trn(path):
    out = {}
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        utt, _, text = line.partition("\t")
        out[utt] = text
    if not out:
        raise DataError(f"no transcripts in {path}")
    return out


def _write_rows(path, header, rows):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def cmd_grad_check(args):
    results = dk.primitive_suite()
    worst_name, worst = max(results.items(), key=lambda kv: kv[1])
    ok = True
    for name, err in sorted(results.items()):
        status = "ok" if err <= 1e-4 else "FAIL"
        ok &= err <= 1e-4
        print(f"{name:35s} max rel err {err:.3e}  {status}")
    print(f"worst: {worst_name} ({worst:.3e})")
    return 0 if ok else 1


def cmd_inspect_ckpt(args):
    info = checkpoint.inspect_checkpoint(args.path)
    print(f"checkpoint {args.path}: {info['n_parameters']} parameters, checksum ok")
    for key in sorted(info["config"]):
        print(f"  config {key} = {info['config'][key]}")
    for name, shape in sorted(info["tensors"].items()):
        print(f"  tensor {name} {shape}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config entry (repeatable)")
    p.add_argument("--seed", type=int, help="override run.seed")
    p.add_argument("--out", help="override paths.out (run directory)")


def build_parser():
    parser = argparse.ArgumentParser(prog="uxenc")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-rirs", help="simulate an impulse-response bank")
    _add_common(p)
    p.set_defaults(func=cmd_gen_rirs)

    p = sub.add_parser("sim-train", help="materialize pretraining-style mixtures")
    _add_common(p)
    p.set_defaults(func=cmd_sim_train)

    p = sub.add_parser("sim-eval", help="simulate fine-tuning/dev/test mixtures")
    _add_common(p)
    p.add_argument("--task", choices=("asr", "diar"), required=True)
    p.add_argument("--count", type=int, help="override eval.count")
    p.set_defaults(func=cmd_sim_eval)

    p = sub.add_parser("fit-labels", help="fit the MFCC K-means codebook")
    _add_common(p)
    p.set_defaults(func=cmd_fit_labels)

    p = sub.add_parser("pretrain", help="contrastive masked-prediction pretraining")
    _add_common(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="train a downstream head on a frozen encoder")
    _add_common(p)
    p.add_argument("task", choices=("asr", "diar"))
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("score", help="score transcripts or a finetuned model")
    _add_common(p)
    p.add_argument("--task", choices=("asr", "diar"), required=True)
    p.add_argument("--hyp", help="hypothesis transcripts (utt<TAB>text)")
    p.add_argument("--ref", help="reference transcripts (utt<TAB>text)")
    p.add_argument("--model", help="head checkpoint from finetune")
    p.add_argument("--model-encoder", help="encoder checkpoint (defaults to --model)")
    p.add_argument("--data", help="dataset directory from sim-eval")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("grad-check", help="finite-difference check of all primitives")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("inspect-ckpt", help="show checkpoint header and verify checksum")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect_ckpt)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UxencError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
