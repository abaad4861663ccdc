"""Line-oriented ``key = value`` configuration with a small arithmetic
grammar for user-defined initial data.

The grammar supports +, -, *, /, parentheses, cos, sin, numeric literals,
pi, and the variables x and y.  Expressions are differentiated symbolically
so projections that need gradients (Ritz initialization) work for custom
initial data too.
"""

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .fem import ScalarField

__all__ = ["Config", "ConfigError", "parse_config", "serialize",
           "parse_expression", "Expr"]


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# expression grammar

class Expr:
    """AST node: ('num', v) | ('var', 'x'|'y') | ('neg', a) |
    ('+'|'-'|'*'|'/', a, b) | ('cos'|'sin', a)."""

    def __init__(self, tag, *args):
        self.tag = tag
        self.args = args

    def __call__(self, x, y):
        t = self.tag
        if t == "num":
            return np.full(np.shape(x), self.args[0], dtype=float)
        if t == "var":
            return np.asarray(x if self.args[0] == "x" else y, dtype=float)
        if t == "neg":
            return -self.args[0](x, y)
        if t == "cos":
            return np.cos(self.args[0](x, y))
        if t == "sin":
            return np.sin(self.args[0](x, y))
        a, b = self.args
        if t == "+":
            return a(x, y) + b(x, y)
        if t == "-":
            return a(x, y) - b(x, y)
        if t == "*":
            return a(x, y) * b(x, y)
        return a(x, y) / b(x, y)

    def diff(self, var):
        t = self.tag
        if t == "num":
            return Expr("num", 0.0)
        if t == "var":
            return Expr("num", 1.0 if self.args[0] == var else 0.0)
        if t == "neg":
            return Expr("neg", self.args[0].diff(var))
        if t == "cos":
            return Expr("neg", Expr("*", Expr("sin", self.args[0]),
                                    self.args[0].diff(var)))
        if t == "sin":
            return Expr("*", Expr("cos", self.args[0]), self.args[0].diff(var))
        a, b = self.args
        if t in "+-":
            return Expr(t, a.diff(var), b.diff(var))
        if t == "*":
            return Expr("+", Expr("*", a.diff(var), b),
                        Expr("*", a, b.diff(var)))
        num = Expr("-", Expr("*", a.diff(var), b), Expr("*", a, b.diff(var)))
        return Expr("/", num, Expr("*", b, b))


def _tokenize(text):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "+-*/()":
            tokens.append(ch)
            i += 1
        elif ch.isdigit() or ch == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] in ".eE"
                             or (text[j] in "+-" and text[j - 1] in "eE")):
                j += 1
            try:
                tokens.append(("num", float(text[i:j])))
            except ValueError:
                raise ConfigError(f"bad numeric literal {text[i:j]!r}")
            i = j
        elif ch.isalpha():
            j = i
            while j < n and text[j].isalpha():
                j += 1
            word = text[i:j]
            if word not in ("x", "y", "pi", "cos", "sin"):
                raise ConfigError(f"unknown name {word!r} in expression")
            tokens.append(("name", word))
            i = j
        else:
            raise ConfigError(f"unexpected character {ch!r} in expression")
    return tokens


def parse_expression(text):
    """Parse the initial-data grammar into an Expr."""
    tokens = _tokenize(text)
    pos = [0]

    def peek():
        return tokens[pos[0]] if pos[0] < len(tokens) else None

    def take():
        tok = peek()
        pos[0] += 1
        return tok

    def parse_sum():
        node = parse_term()
        while peek() in ("+", "-"):
            op = take()
            node = Expr(op, node, parse_term())
        return node

    def parse_term():
        node = parse_factor()
        while peek() in ("*", "/"):
            op = take()
            node = Expr(op, node, parse_factor())
        return node

    def parse_factor():
        tok = take()
        if tok is None:
            raise ConfigError("unexpected end of expression")
        if tok == "-":
            return Expr("neg", parse_factor())
        if tok == "+":
            return parse_factor()
        if tok == "(":
            node = parse_sum()
            if take() != ")":
                raise ConfigError("missing ')' in expression")
            return node
        if isinstance(tok, tuple) and tok[0] == "num":
            return Expr("num", tok[1])
        if isinstance(tok, tuple) and tok[0] == "name":
            word = tok[1]
            if word == "pi":
                return Expr("num", math.pi)
            if word in ("x", "y"):
                return Expr("var", word)
            if take() != "(":
                raise ConfigError(f"{word} must be followed by '('")
            node = parse_sum()
            if take() != ")":
                raise ConfigError("missing ')' in expression")
            return Expr(word, node)
        raise ConfigError(f"unexpected token {tok!r} in expression")

    node = parse_sum()
    if pos[0] != len(tokens):
        raise ConfigError(f"trailing tokens in expression {text!r}")
    return node


def _paper_ic():
    def value(x, y):
        return (0.5 * (1.0 - np.cos(4.0 * np.pi * x))
                * (1.0 - np.cos(2.0 * np.pi * y)) - 1.0)

    def gradient(x, y):
        gx = (2.0 * np.pi * np.sin(4.0 * np.pi * x)
              * (1.0 - np.cos(2.0 * np.pi * y)))
        gy = (np.pi * (1.0 - np.cos(4.0 * np.pi * x))
              * np.sin(2.0 * np.pi * y))
        return np.stack([gx, gy], axis=-1)

    return ScalarField(value, gradient)


def initial_field(selector):
    """Build a ScalarField from an initial-data selector string."""
    sel = selector.strip()
    if sel == "paper_ic":
        return _paper_ic()
    if sel.startswith("constant(") and sel.endswith(")"):
        try:
            c = float(sel[len("constant("):-1])
        except ValueError:
            raise ConfigError(f"bad constant initial data {sel!r}")
        return ScalarField(lambda x, y: np.full(np.shape(x), c),
                           lambda x, y: np.zeros(np.shape(x) + (2,)))
    expr = parse_expression(sel)
    dx, dy = expr.diff("x"), expr.diff("y")

    def gradient(x, y):
        return np.stack([dx(x, y), dy(x, y)], axis=-1)

    return ScalarField(expr, gradient)


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class Config:
    epsilon: float = 6.25e-2
    gamma: float = 1.0
    lam: float = 1.0            # key: lambda
    eta: float = 1.0
    theta: float = 0.0
    n: int = 16
    tau: float = 1.25e-4
    T: float = 0.4
    picard_tol: float = 1e-9
    newton_tol: float = 1e-12
    linear_tol: float = 1e-12
    max_picard: int = 100
    max_newton: int = 50
    initial_data: str = "paper_ic"
    init_mode: str = "interpolate"   # or "ritz"
    out_dir: str = "."
    snapshot_every: int = 0          # VTK cadence in steps, 0 = off
    base_n: int = 8                  # convergence-study base mesh
    levels: int = 4
    path_const: float = 0.001 * math.sqrt(2.0)  # tau = c * h on the path

    def initial_field(self):
        return initial_field(self.initial_data)

    def make_params(self):
        from .scheme import Params
        return Params(epsilon=self.epsilon, tau=self.tau, T=self.T,
                      gamma=self.gamma, lam=self.lam, eta=self.eta,
                      theta=self.theta, picard_tol=self.picard_tol,
                      newton_tol=self.newton_tol, linear_tol=self.linear_tol,
                      max_picard=self.max_picard, max_newton=self.max_newton)

    def with_updates(self, **kw):
        return replace(self, **kw)


_KEY_TO_FIELD = {"lambda": "lam"}
_FIELD_TO_KEY = {"lam": "lambda"}

_CONSTRAINTS = {
    "epsilon": ("epsilon > 0", lambda v: v > 0),
    "gamma": ("gamma >= 0", lambda v: v >= 0),
    "lam": ("lambda > 0", lambda v: v > 0),
    "eta": ("eta >= 0", lambda v: v >= 0),
    "theta": ("theta >= 0", lambda v: v >= 0),
    "n": ("n >= 1", lambda v: v >= 1),
    "tau": ("tau > 0", lambda v: v > 0),
    "T": ("T > 0", lambda v: v > 0),
    "picard_tol": ("picard_tol > 0", lambda v: v > 0),
    "newton_tol": ("newton_tol > 0", lambda v: v > 0),
    "linear_tol": ("linear_tol > 0", lambda v: v > 0),
    "max_picard": ("max_picard >= 1", lambda v: v >= 1),
    "max_newton": ("max_newton >= 1", lambda v: v >= 1),
    "init_mode": ("init_mode in {interpolate, ritz}",
                  lambda v: v in ("interpolate", "ritz")),
    "snapshot_every": ("snapshot_every >= 0", lambda v: v >= 0),
    "base_n": ("base_n >= 1", lambda v: v >= 1),
    "levels": ("levels >= 2", lambda v: v >= 2),
    "path_const": ("path_const > 0", lambda v: v > 0),
}


def _convert(field, raw, key):
    kind = field.type if isinstance(field.type, type) else {
        "int": int, "float": float, "str": str}.get(str(field.type), str)
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(
            f"key {key!r}: cannot parse {raw!r} as {kind.__name__}")


def parse_config(source):
    """Parse ``key = value`` text (or a path to it) into a validated Config.

    '#' starts a comment; unknown keys are rejected; every omitted key takes
    the documented default (the Table-1 row-1 experiment).
    """
    looks_inline = ("\n" in source or "=" in source or not source.strip()
                    or source.lstrip().startswith("#"))
    if looks_inline:
        text = source
    else:
        try:
            with open(source, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {source!r}: {exc}")

    by_name = {f.name: f for f in fields(Config)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in body.split("=", 1))
        name = _KEY_TO_FIELD.get(key, key)
        if name not in by_name:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if name in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[name] = _convert(by_name[name], raw, key)

    cfg = Config(**values)
    validate(cfg)
    return cfg


def validate(cfg):
    for name, (desc, ok) in _CONSTRAINTS.items():
        if not ok(getattr(cfg, name)):
            key = _FIELD_TO_KEY.get(name, name)
            raise ConfigError(f"key {key!r} violates constraint: {desc}")
    # the time grid must be uniform with an integral number of steps
    m = round(cfg.T / cfg.tau)
    if m < 1 or abs(m * cfg.tau - cfg.T) > 1e-12 * max(1.0, cfg.T):
        raise ConfigError(
            f"key 'tau' violates constraint: tau must divide T "
            f"(T/tau = {cfg.T / cfg.tau!r})")
    try:
        initial_field(cfg.initial_data)
    except ConfigError as exc:
        raise ConfigError(f"key 'initial_data': {exc}")
    return cfg


def serialize(cfg):
    """Canonical key = value text; parse(serialize(c)) == c."""
    lines = []
    for f in fields(Config):
        key = _FIELD_TO_KEY.get(f.name, f.name)
        val = getattr(cfg, f.name)
        if isinstance(val, float):
            lines.append(f"{key} = {val!r}")
        else:
            lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"
