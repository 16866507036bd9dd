"""``genrkm`` command-line tool."""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import nn
from .data_io import (Dataset, ModelFile, generate_toy_gaussians, idx_image_shape, image_grid,
                      load_csv, load_idx, load_model, one_hot, save_model, write_csv, write_pnm)
from .errors import GenRKMError
from .generation import (GenerationConfig, bilinear_interpolate, decode_labels, fit_gmm,
                         generate, generate_view, sample_gmm, traverse_component)
from .kernels import KernelSpec
from .objective import ObjectiveConfig, compute_jt_kernel
from .subspace import ViewConfig, encode
from .training import TrainConfig, train_explicit, train_implicit


class CliError(Exception):
    pass


# -- option parsing ----------------------------------------------------------

def _floats(text):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _words(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _data_options(p):
    g = p.add_argument_group("data")
    g.add_argument("--toy3", action="store_true", help="3-mode Gaussian toy set with a label view")
    g.add_argument("--toy-count", type=int, default=100, help="points per toy mode")
    g.add_argument("--csv", type=_words, default=[], help="comma-separated CSV files, one per view")
    g.add_argument("--header", action="store_true", help="CSV files start with a header row")
    g.add_argument("--idx", help="IDX image file")
    g.add_argument("--onehot", help="IDX label file, added as a one-hot view")
    g.add_argument("--subset", type=int, help="use only the first N samples")
    g.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="genrkm", description="Generative restricted kernel machines")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit a model")
    t.add_argument("--config", help="key=value file; command-line flags take precedence")
    _data_options(t)
    t.add_argument("--kernel", type=_words, default=["gaussian"], help="kernel per view (comma list)")
    t.add_argument("--sigma", type=_floats, default=[1.0], help="bandwidth per view (comma list)")
    t.add_argument("--eta", type=_floats, default=None, help="eta per view (comma list, default 1)")
    t.add_argument("--s", type=int, default=2, help="latent dimension")
    t.add_argument("--m", type=int, default=1, help="mini-batches per epoch (explicit maps)")
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--lr", type=float, default=None, help="Adam step size")
    t.add_argument("--c-stab", type=float, default=1.0)
    t.add_argument("--gamma", type=float, default=1.0, help="reconstruction weight")
    t.add_argument("--primal", action="store_true", help="covariance-form eigensolve when possible")
    t.add_argument("--explicit", action="store_true", help="learn neural feature and pre-image maps")
    t.add_argument("--hidden", type=_ints, default=[], help="hidden layer widths of the feature maps")
    t.add_argument("--df", type=int, default=None, help="feature dimension of the explicit maps")
    t.add_argument("--final-cap", type=int, default=5000, help="max samples in the final full pass")
    t.add_argument("--nr", type=int, default=4, help="kernel smoother neighbours (stored for generation)")
    t.add_argument("--l", type=int, default=None, help="GMM components fitted after training")
    t.add_argument("--quiet", action="store_true", help="suppress per-iteration progress lines")
    t.add_argument("--out", default="model.grkm")
    t.add_argument("--report", default=None, help="loss trace CSV (default <out>.trace.csv)")

    g = sub.add_parser("generate", help="sample new points from a trained model")
    g.add_argument("--config")
    g.add_argument("--model", required=True)
    g.add_argument("--count", type=int, default=16)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--nr", type=int, default=None)
    g.add_argument("--l", type=int, default=None, help="refit the GMM with this many components")
    g.add_argument("--cols", type=int, default=8, help="columns in image grids")
    g.add_argument("--out", default="generated", help="output prefix")

    e = sub.add_parser("encode", help="latent codes of a dataset")
    e.add_argument("--config")
    e.add_argument("--model", required=True)
    _data_options(e)
    e.add_argument("--out", default="latent.csv")

    i = sub.add_parser("interpolate", help="bilinear sweep between four training codes")
    i.add_argument("--config")
    i.add_argument("--model", required=True)
    i.add_argument("--anchors", type=_ints, default=[0, 1, 2, 3], help="four training indices")
    i.add_argument("--steps", type=int, default=5)
    i.add_argument("--nr", type=int, default=None)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--out", default="interp", help="output prefix")

    r = sub.add_parser("traverse", help="vary one latent coordinate at a time")
    r.add_argument("--config")
    r.add_argument("--model", required=True)
    r.add_argument("--base", type=int, default=0, help="training index of the base code")
    r.add_argument("--components", type=_ints, default=None, help="default: all")
    r.add_argument("--span", type=float, default=None, help="offset range (default 2 std of the component)")
    r.add_argument("--steps", type=int, default=7)
    r.add_argument("--nr", type=int, default=None)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", default="traverse", help="output prefix")

    v = sub.add_parser("eval", help="reconstruction error and latent decorrelation")
    v.add_argument("--config")
    v.add_argument("--model", required=True)
    _data_options(v)
    v.add_argument("--nr", type=int, default=1)
    v.add_argument("--out", default="eval.csv")
    return parser


def _read_config(path):
    values = {}
    try:
        with open(path) as f:
            lines = f.readlines()
    except OSError as exc:
        raise CliError(f"cannot read config file: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value")
        key, val = (x.strip() for x in line.split("=", 1))
        values[key.replace("-", "_")] = (val, lineno)
    return values


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, (val, lineno) in _read_config(args.config).items():
        if key not in actions:
            raise CliError(f"{args.config}:{lineno}: unknown key {key!r} for '{args.command}'")
        act = actions[key]
        try:
            if isinstance(act, argparse._StoreTrueAction):
                defaults[key] = _bool(val)
            else:
                defaults[key] = act.type(val) if act.type else val
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise CliError(f"{args.config}:{lineno}: bad value for {key!r}: {exc}") from None
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# -- helpers -----------------------------------------------------------------

class Outputs:
    """Tracks written files so a failed command leaves nothing behind."""

    def __init__(self):
        self.paths = []

    def add(self, path):
        self.paths.append(path)
        return path

    def cleanup(self):
        for p in self.paths:
            for q in (p, f"{p}.tmp"):
                if os.path.exists(q):
                    os.remove(q)


def load_dataset(args) -> Dataset:
    sources = sum([bool(args.toy3), bool(args.csv), bool(args.idx)])
    if sources != 1:
        raise CliError("give exactly one data source: --toy3, --csv or --idx")
    meta = {}
    if args.toy3:
        ds = generate_toy_gaussians(count=args.toy_count, seed=args.seed)
    elif args.csv:
        views = {}
        for i, path in enumerate(args.csv):
            if not os.path.exists(path):
                raise CliError(f"data file not found: {path}")
            views[f"view{i}"] = load_csv(path, args.header)
        ds = Dataset(views)
    else:
        for path in filter(None, (args.idx, args.onehot)):
            if not os.path.exists(path):
                raise CliError(f"data file not found: {path}")
        views = {"image": load_idx(args.idx)}
        meta["image_shapes"] = {"image": list(idx_image_shape(args.idx))}
        labels = None
        if args.onehot:
            labels = load_idx(args.onehot)
            if labels.shape[0] != views["image"].shape[0]:
                raise CliError("image and label files hold different sample counts")
            views["label"] = one_hot(labels, max(10, int(labels.max()) + 1))
            meta["label_views"] = ["label"]
        ds = Dataset(views, labels, meta)
    if args.toy3:
        ds.meta["label_views"] = ["label"]
    if args.subset is not None:
        ds = ds.subset(args.subset)
    return ds


def _per_view(values, k, name):
    if values is None:
        return None
    if len(values) == 1:
        return list(values) * k
    if len(values) != k:
        raise CliError(f"--{name} needs 1 or {k} values, got {len(values)}")
    return list(values)


def _header(command, seed, extra=""):
    return f"genrkm {command} seed={seed}" + (f" {extra}" if extra else "")


def _load(path) -> ModelFile:
    if not os.path.exists(path):
        raise CliError(f"model file not found: {path}")
    return load_model(path)


def _gen_config(mf, nr, seed):
    return GenerationConfig(n_r=nr if nr is not None else int(mf.config.get("nr", 4)), seed=seed)


def _write_views(outs, prefix, mf, views_out, header, cols=8):
    """One CSV per view, a PGM grid for image views, decoded classes for
    label views."""
    shapes = mf.config.get("image_shapes", {})
    label_views = mf.config.get("label_views", [])
    for v, X in zip(mf.model.views, views_out):
        X = np.atleast_2d(X)
        write_csv(outs.add(f"{prefix}_{v.name}.csv"), X, comments=[header])
        if v.name in shapes:
            write_pnm(outs.add(f"{prefix}_{v.name}.pgm"), image_grid(X, shapes[v.name], cols), header)
        if v.name in label_views:
            write_csv(outs.add(f"{prefix}_{v.name}_class.csv"), decode_labels(X)[:, None],
                      comments=[header])


# -- commands ----------------------------------------------------------------

def _explicit_views(ds, args, etas):
    views = []
    for i, (name, X) in enumerate(ds.views.items()):
        d = X.shape[1]
        df = args.df if args.df is not None else min(d, args.s)
        bounded = bool(X.min() >= 0.0 and X.max() <= 1.0)
        fm = nn.init_params(nn.mlp([d, *args.hidden, df]), args.seed * 1000 + 2 * i)
        pm = nn.init_params(nn.mlp([df, *reversed(args.hidden), d],
                                   output="sigmoid" if bounded else "linear"),
                            args.seed * 1000 + 2 * i + 1)
        views.append(ViewConfig(name, etas[i], feature_map=fm, preimage_map=pm))
    return views


def cmd_train(args, outs):
    ds = load_dataset(args)
    k = len(ds.views)
    etas = _per_view(args.eta, k, "eta") or [1.0] * k
    report_path = args.report or f"{args.out}.trace.csv"
    config = {"command": "train", "seed": args.seed, "s": args.s, "nr": args.nr, "n": ds.n,
              "explicit": args.explicit, **{key: ds.meta[key] for key in ("image_shapes", "label_views")
                                            if key in ds.meta}}
    names = [f"recon_{n}" for n in ds.views]
    if args.explicit:
        lr = args.lr if args.lr is not None else (1e-3 if args.idx else 1e-4)
        tc = TrainConfig(s=args.s, batches=args.m, epochs=args.epochs, learning_rate=lr, seed=args.seed,
                         objective=ObjectiveConfig(args.c_stab, args.gamma), use_primal=args.primal,
                         final_pass_cap=args.final_cap)
        views = _explicit_views(ds, args, etas)
        model, report = train_explicit(ds, views, tc, verbose=not args.quiet)
        rows = [[i // args.m, i % args.m, e.j_t, e.j_stab, e.j_c, *e.recon_losses]
                for i, e in enumerate(report.trace)]
        config.update(m=args.m, epochs=args.epochs, lr=lr, c_stab=args.c_stab, gamma=args.gamma)
    else:
        kinds = _per_view(args.kernel, k, "kernel")
        sigmas = _per_view(args.sigma, k, "sigma")
        specs = [KernelSpec(kind, sg) for kind, sg in zip(kinds, sigmas)]
        model = train_implicit(ds, specs, etas, args.s, names=list(ds.views))
        jt = compute_jt_kernel(model.grams, model.H, model.Lambda, etas)
        rows = [[0, 0, jt, jt, jt] + [0.0] * k]
        if not args.quiet:
            print(f"epoch=0 batch=0 Jt={jt:.6e} Jc={jt:.6e} recon=" + ",".join(["0"] * k), flush=True)
    gmm = None
    if args.l is not None:
        gmm = fit_gmm(model.H.T, args.l, args.seed)
        config["l"] = args.l
    header = _header("train", args.seed)
    write_csv(outs.add(report_path), np.array(rows),
              header="epoch,batch,Jt,Jstab,Jc," + ",".join(names), comments=[header])
    save_model(outs.add(args.out), ModelFile(model, config, gmm))
    print(f"# {header}")
    print("eigenvalues=" + ",".join(f"{x:.10g}" for x in model.Lambda))
    print(f"model={args.out} report={report_path}")


def cmd_generate(args, outs):
    mf = _load(args.model)
    gmm = mf.gmm
    if gmm is None or (args.l is not None and args.l != gmm.l):
        l = args.l if args.l is not None else int(mf.config.get("l", 1))
        gmm = fit_gmm(mf.model.H.T, l, args.seed)
    if args.count < 1:
        raise CliError("--count must be >= 1")
    hs = sample_gmm(gmm, args.seed, args.count).T
    header = _header("generate", args.seed, f"count={args.count}")
    write_csv(outs.add(f"{args.out}_latent.csv"), hs.T, comments=[header])
    _write_views(outs, args.out, mf, generate(mf.model, hs, _gen_config(mf, args.nr, args.seed)),
                 header, args.cols)
    print(f"# {header}")


def _encode_inputs(mf, ds):
    names = [v.name for v in mf.model.views]
    if len(ds.views) != len(names):
        raise CliError(f"model has {len(names)} views, data has {len(ds.views)}")
    return list(ds.views.values())


def cmd_encode(args, outs):
    mf = _load(args.model)
    ds = load_dataset(args)
    h = encode(mf.model, _encode_inputs(mf, ds))
    header = _header("encode", args.seed)
    write_csv(outs.add(args.out), h.T, header=",".join(f"h{j}" for j in range(h.shape[0])),
              comments=[header])
    print(f"# {header}")


def cmd_interpolate(args, outs):
    mf = _load(args.model)
    model = mf.model
    if len(args.anchors) != 4:
        raise CliError("--anchors needs exactly four training indices")
    if any(not 0 <= a < model.n_train for a in args.anchors):
        raise CliError(f"anchor indices must lie in [0, {model.n_train})")
    if args.steps < 2:
        raise CliError("--steps must be >= 2")
    anchors = [model.H[:, a] for a in args.anchors]
    grid = np.linspace(0.0, 1.0, args.steps)
    hs = np.stack([bilinear_interpolate(*anchors, a, g) for g in grid for a in grid], axis=1)
    header = _header("interpolate", args.seed, "anchors=" + ",".join(map(str, args.anchors)))
    write_csv(outs.add(f"{args.out}_latent.csv"), hs.T, comments=[header])
    _write_views(outs, args.out, mf, generate(model, hs, _gen_config(mf, args.nr, args.seed)),
                 header, args.steps)
    print(f"# {header}")


def cmd_traverse(args, outs):
    mf = _load(args.model)
    model = mf.model
    if not 0 <= args.base < model.n_train:
        raise CliError(f"--base must lie in [0, {model.n_train})")
    comps = args.components if args.components is not None else list(range(model.s))
    if args.steps < 1:
        raise CliError("--steps must be >= 1")
    base = model.H[:, args.base]
    cfg = _gen_config(mf, args.nr, args.seed)
    header = _header("traverse", args.seed, f"base={args.base}")
    hs, tags = [], []
    for c in comps:
        span = args.span if args.span is not None else 2.0 * float(np.std(model.H[c]))
        offsets = np.linspace(-span, span, args.steps)
        for d, h in zip(offsets, traverse_component(base, c, offsets)):
            hs.append(h)
            tags.append((c, d))
    hs = np.stack(hs, axis=1)
    outs_views = generate(model, hs, cfg)
    tag = np.array(tags, dtype=np.float64)
    for v, X in zip(model.views, outs_views):
        write_csv(outs.add(f"{args.out}_{v.name}.csv"), np.hstack([tag, X]),
                  header="component,offset," + ",".join(f"{v.name}{j}" for j in range(X.shape[1])),
                  comments=[header])
        shape = mf.config.get("image_shapes", {}).get(v.name)
        if shape:
            write_pnm(outs.add(f"{args.out}_{v.name}.pgm"), image_grid(X, shape, args.steps), header)
    print(f"# {header}")


def latent_offdiag_corr(H) -> float:
    """Largest |correlation| between two different latent components."""
    C = np.corrcoef(np.asarray(H))
    if C.ndim < 2:
        return 0.0
    off = C - np.diag(np.diag(C))
    return float(np.max(np.abs(off)))


def cmd_eval(args, outs):
    mf = _load(args.model)
    model = mf.model
    ds = load_dataset(args)
    inputs = _encode_inputs(mf, ds)
    h = encode(model, inputs)
    cfg = _gen_config(mf, args.nr, args.seed)
    rows = []
    for i, (v, X) in enumerate(zip(model.views, inputs)):
        Xhat = generate_view(model, i, h, cfg)
        rows.append((v.name, float(np.mean(np.sum((X - Xhat) ** 2, axis=1)))))
    corr = latent_offdiag_corr(model.H)
    header = _header("eval", args.seed, f"nr={cfg.n_r}")
    with open(outs.add(args.out), "w") as f:
        f.write(f"# {header}\nmetric,value\n")
        for name, mse in rows:
            f.write(f"mse_{name},{mse!r}\n")
        f.write(f"latent_max_offdiag_corr,{corr!r}\n")
    print(f"# {header}")
    for name, mse in rows:
        print(f"mse_{name}={mse:.6e}")
    print(f"latent_max_offdiag_corr={corr:.3e}")


COMMANDS = {"train": cmd_train, "generate": cmd_generate, "encode": cmd_encode,
            "interpolate": cmd_interpolate, "traverse": cmd_traverse, "eval": cmd_eval}


def main(argv=None) -> int:
    outs = Outputs()
    try:
        args = parse_args(argv)
        COMMANDS[args.command](args, outs)
        return 0
    except (CliError, GenRKMError, ValueError, OSError) as exc:
        outs.cleanup()
        print(f"genrkm: error: {exc}", file=sys.stderr)
        return 2
    except BaseException:
        outs.cleanup()
        raise


if __name__ == "__main__":
    sys.exit(main())
