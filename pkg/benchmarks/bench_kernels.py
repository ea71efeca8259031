"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--batch 16] [--frames 60] [--repeat 5]

Both backends run on identical inputs at the default generator size; the
script also reports the largest output difference between them.
"""
import argparse
import timeit

import numpy as np

from pfgan import _kernels
from pfgan.generator import Generator, GeneratorConfig, make_batch
from pfgan.synthtask import CorpusConfig, make_split


def decoder_inputs(batch_size, frames, seed=0):
    cfg = GeneratorConfig()
    gen = Generator(cfg, seed=seed)
    corpus = CorpusConfig(seed=seed)
    utts = [u for u in make_split(corpus, "train", 400) if u.T >= frames][:batch_size]
    batch = make_batch(utts)
    enc = gen.encode_batch(batch.symbols, batch.symbol_valid)
    flat = [v.value for v in gen.decoder_weights().flat()]
    W = _kernels.DecoderWeights.from_flat(flat, len(cfg.prenet_dims))
    rng = np.random.default_rng(seed)
    B = batch.size
    keeps = [np.ascontiguousarray((rng.random((frames, B, d)) >= cfg.prenet_dropout)
                                  / (1.0 - cfg.prenet_dropout)) for d in cfg.prenet_dims]
    use_real = rng.random((frames, B)) < 0.5
    use_real[0] = False
    targets = np.ascontiguousarray(batch.frames[:, :frames])
    return W, enc.memory.value, enc.keys.value, enc.valid, targets, use_real, keeps


def gru_inputs(B, I, H, seed=0):
    rng = np.random.default_rng(seed)
    return (rng.normal(size=(B, I)), rng.normal(size=(B, H)), rng.normal(0, 0.1, (I, 3 * H)),
            rng.normal(0, 0.1, (H, 3 * H)), rng.normal(0, 0.1, 3 * H), rng.normal(0, 0.1, 3 * H))


def bench(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--frames", type=int, default=60)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = _kernels.backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the numpy fallback is available")
    dec = decoder_inputs(args.batch, args.frames)
    gru = gru_inputs(args.batch, 256, 64)
    timings, outputs = {}, {}
    for name, mod in backends.items():
        traj, align, cache = mod.decoder_forward(*dec)
        g = np.ones_like(traj)
        W, memory, keys, valid, _, use_real, keeps = dec
        timings[name] = {
            "gru fwd+bwd": bench(lambda: mod.gru_backward(
                np.ones((args.batch, 64)), gru[0], gru[1], gru[2], gru[3],
                *mod.gru_forward(*gru)[1:]), args.repeat * 20),
            "decoder fwd": bench(lambda: mod.decoder_forward(*dec), args.repeat),
            "decoder bwd": bench(lambda: mod.decoder_backward(
                g, W, memory, keys, valid, use_real, keeps, cache), args.repeat),
        }
        outputs[name] = traj

    names = list(backends)
    print(f"batch={args.batch} frames={args.frames} (best of {args.repeat}, seconds)")
    print(f"{'kernel':<14}" + "".join(f"{n:>12}" for n in names)
          + ("     speedup" if len(names) > 1 else ""))
    for kernel in timings[names[0]]:
        row = f"{kernel:<14}" + "".join(f"{timings[n][kernel]:>12.5f}" for n in names)
        if len(names) > 1:
            row += f"{timings['numpy'][kernel] / timings['compiled'][kernel]:>11.2f}x"
        print(row)
    if len(names) > 1:
        diff = np.abs(outputs["numpy"] - outputs["compiled"]).max()
        print(f"max |numpy - compiled| decoder output: {diff:.3e}")


if __name__ == "__main__":
    main()
