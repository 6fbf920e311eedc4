"""Restricted linear-algebra markdown: tokenizer, parser and index expansion.

Supported forms, all inside ``$...$`` or bare lines::

    \\max \\sum_i A_i \\cdot x_i
    \\sum_{i \\in I} w_{it} \\leq 0.9 \\sum_{i} Q_i y_{it}, \\quad \\forall t
    y_{i,t-1} - y_{it} \\leq 1 - y_{i,t+1}, \\forall i, t \\in \\{2, 3\\}
    x_{ij} \\in \\{0, 1\\}, \\forall i, j
    \\sum_i schema[Resource 1][i] \\cdot x[i] \\leq schema[Available]

Subscripts without commas split into single-letter indices and digit runs
(``x_{i1}`` is ``x`` at ``(i, 1)``). Parameters are positional over their
index set: ``A_i`` with ``i`` the k-th member of its set reads ``A[k-1]``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union


class GrammarError(ValueError):
    pass


class UnboundSymbolError(GrammarError):
    def __init__(self, symbol: str, where: str = ""):
        self.symbol = symbol
        super().__init__(f"unbound symbol {symbol!r}" + (f" in {where}" if where else ""))


class LengthMismatchError(GrammarError):
    pass


# --------------------------------------------------------------------------- cleaning

_GREEK = ("alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta", "iota", "kappa", "lambda",
          "mu", "nu", "xi", "pi", "rho", "sigma", "tau", "upsilon", "phi", "chi", "psi", "omega",
          "Gamma", "Delta", "Theta", "Lambda", "Xi", "Pi", "Phi", "Psi", "Omega")
_GREEK_CHARS = {chr(0x3B1 + k): n for k, n in enumerate(
    ("alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta", "iota", "kappa", "lambda", "mu",
     "nu", "xi", "omicron", "pi", "rho", "sigmaf", "sigma", "tau", "upsilon", "phi", "chi", "psi", "omega"))}
_GREEK_CHARS.update({"Λ": "Lambda", "Δ": "Delta", "Φ": "Phi", "Ω": "Omega", "Π": "Pi"})

_WRAPPERS = re.compile(r"\\(?:text|textrm|textbf|textit|mathrm|mathit|mathbf|operatorname|texttt|mbox)\s*\{([^{}]*)\}")
_REPLACEMENTS = [
    (re.compile(r"\\(?:left|right|bigl|bigr|Bigl|Bigr|big|Big|displaystyle|limits|nolimits|small|normalsize)(?![a-zA-Z])"), " "),
    (re.compile(r"\\(?:qquad|quad)(?![a-zA-Z])|\\[,;:!]|~"), " "),
    (re.compile(r"\\(?:cdot|times)(?![a-zA-Z])|·|×"), " * "),
    (re.compile(r"\\(?:leqslant|leq|le)(?![a-zA-Z])|≤|<="), " <= "),
    (re.compile(r"\\(?:geqslant|geq|ge)(?![a-zA-Z])|≥|>="), " >= "),
    (re.compile(r"\\sum(?![a-zA-Z])|∑|Σ"), r" \\sum "),
    (re.compile(r"\\forall(?![a-zA-Z])|∀"), r" \\forall "),
    (re.compile(r"\\in(?![a-zA-Z])|∈"), r" \\in "),
    (re.compile(r"\\(?:dots|cdots|ldots)(?![a-zA-Z])|\.\.\.|…"), r" \\dots "),
    (re.compile(r"\\mathbb\s*\{?\s*Z\s*\}?|ℤ"), r" \\ZZ "),
    (re.compile(r"\\mathbb\s*\{?\s*R\s*\}?|ℝ"), r" \\RR "),
    (re.compile(r"\\mathbb\s*\{?\s*N\s*\}?|ℕ"), r" \\NN "),
    (re.compile(r"\\max(?![a-zA-Z])"), " max "),
    (re.compile(r"\\min(?![a-zA-Z])"), " min "),
    (re.compile(r"−|–"), "-"),
    # greek letters become plain identifiers: \lambda_k and λ_k both read as lambda_k
    (re.compile(r"\\(?:var)?(" + "|".join(_GREEK) + r")(?![a-zA-Z])"), r" \1"),
    (re.compile("[" + "".join(_GREEK_CHARS) + "]"), lambda m: " " + _GREEK_CHARS[m.group(0)]),
]


def clean(text: str) -> str:
    prev = None
    while prev != text:
        prev, text = text, _WRAPPERS.sub(r"\1", text)
    text = text.replace("&", " ")
    for pat, rep in _REPLACEMENTS:
        text = pat.sub(rep, text)
    # sentence punctuation closing a displayed formula
    return re.sub(r"[\s.,;]+$", "", text).strip()


# --------------------------------------------------------------------------- tokens

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+)
  | (?P<cmd>\\(?:sum|forall|in|dots|ZZ|RR|NN|frac|\{|\}))
  | (?P<op><=|>=|=|<|>)
  | (?P<ident>[A-Za-z][A-Za-z0-9]*)
  | (?P<punct>[_^{}()\[\],+\-*/'"])
    """,
    re.VERBOSE,
)


@dataclass
class Tok:
    kind: str  # num, ident, op, punct, cmd, str
    text: str

    def __repr__(self) -> str:
        return f"{self.kind}:{self.text}"


def tokenize(text: str) -> list[Tok]:
    out: list[Tok] = []
    pos = 0
    while pos < len(text):
        # raw column names inside schema[...]
        if out and out[-1].kind == "ident" and out[-1].text == "schema" and text[pos] == "[":
            end = text.find("]", pos)
            if end < 0:
                raise GrammarError("unterminated schema[...] reference")
            name = text[pos + 1:end].strip().strip("'\"").strip()
            out.append(Tok("str", name))
            pos = end + 1
            continue
        m = _TOKEN.match(text, pos)
        if not m:
            raise GrammarError(f"unexpected character {text[pos]!r} in {text!r}")
        pos = m.end()
        kind = m.lastgroup
        if kind == "ws":
            continue
        if kind == "op" and m.group() in ("<", ">"):
            kind_text = "<=" if m.group() == "<" else ">="
            out.append(Tok("op", kind_text))
            continue
        out.append(Tok(kind, m.group()))
    return out


# --------------------------------------------------------------------------- AST


@dataclass(frozen=True)
class Idx:
    symbol: Optional[str]  # None for a literal
    value: int  # literal value, or offset added to the symbol


@dataclass
class Num:
    value: float


@dataclass
class Ref:
    name: str
    indices: tuple[Idx, ...] = ()
    column: Optional[str] = None  # schema column for plan references


@dataclass
class SetSpec:
    symbol: str
    values: Optional[list[int]] = None  # explicit members
    named: Optional[str] = None  # named set such as I or T


@dataclass
class Sum:
    specs: list[SetSpec]
    body: object


@dataclass
class Add:
    terms: list[tuple[int, object]]


@dataclass
class Mul:
    factors: list[object]


@dataclass
class Div:
    num: object
    den: object


@dataclass
class Statement:
    kind: str  # "constraint" | "domain" | "objective"
    lhs: object = None
    op: Optional[str] = None
    rhs: object = None
    refs: list[Ref] = field(default_factory=list)
    domain: Optional[tuple[str, float, float]] = None  # kind, lower, upper
    foralls: list[SetSpec] = field(default_factory=list)
    sense: Optional[str] = None
    title: str = ""
    source: str = ""


class _Parser:
    def __init__(self, toks: list[Tok], source: str):
        self.toks = toks
        self.i = 0
        self.source = source

    # helpers
    def peek(self, k: int = 0) -> Optional[Tok]:
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def at(self, kind: str, text: Optional[str] = None, k: int = 0) -> bool:
        t = self.peek(k)
        return t is not None and t.kind == kind and (text is None or t.text == text)

    def take(self, kind: Optional[str] = None, text: Optional[str] = None) -> Tok:
        t = self.peek()
        if t is None or (kind and t.kind != kind) or (text and t.text != text):
            want = text or kind or "token"
            got = t.text if t else "end of input"
            raise GrammarError(f"expected {want!r}, got {got!r} in {self.source!r}")
        self.i += 1
        return t

    def done(self) -> bool:
        return self.i >= len(self.toks)

    # expressions
    def expr(self) -> Add:
        terms: list[tuple[int, object]] = []
        sign = 1
        if self.at("punct", "+"):
            self.take()
        elif self.at("punct", "-"):
            self.take()
            sign = -1
        terms.append((sign, self.term()))
        while self.at("punct", "+") or self.at("punct", "-"):
            sign = 1 if self.take().text == "+" else -1
            terms.append((sign, self.term()))
        return Add(terms)

    def _starts_factor(self) -> bool:
        t = self.peek()
        if t is None:
            return False
        return t.kind in ("num", "ident") or (t.kind == "punct" and t.text == "(") or (
            t.kind == "cmd" and t.text in (r"\sum", r"\frac"))

    def term(self) -> object:
        factors: list[object] = []
        while True:
            if self.at("cmd", r"\sum"):
                # a sum swallows the rest of the product it appears in
                factors.append(self.sum_())
                break
            factors.append(self.factor())
            if self.at("punct", "*"):
                self.take()
                continue
            if self.at("punct", "/"):
                self.take()
                factors[-1] = Div(factors[-1], self.factor())
                if self.at("punct", "*"):
                    self.take()
                    continue
            if self._starts_factor():
                continue
            break
        return factors[0] if len(factors) == 1 else Mul(factors)

    def factor(self) -> object:
        t = self.peek()
        if t is None:
            raise GrammarError(f"unexpected end of expression in {self.source!r}")
        if t.kind == "num":
            self.take()
            return Num(float(t.text))
        if t.kind == "punct" and t.text == "(":
            self.take()
            e = self.expr()
            self.take("punct", ")")
            return e
        if t.kind == "punct" and t.text == "{":
            self.take()
            e = self.expr()
            self.take("punct", "}")
            return e
        if t.kind == "punct" and t.text == "-":
            self.take()
            return Mul([Num(-1.0), self.factor()])
        if t.kind == "cmd" and t.text == r"\frac":
            self.take()
            self.take("punct", "{")
            num = self.expr()
            self.take("punct", "}")
            self.take("punct", "{")
            den = self.expr()
            self.take("punct", "}")
            return Div(num, den)
        if t.kind == "ident":
            return self.ref()
        raise GrammarError(f"unexpected {t.text!r} in {self.source!r}")

    def ref(self) -> Ref:
        name = self.take("ident").text
        column = None
        if name == "schema":
            if not self.at("str"):
                raise GrammarError(f"schema reference without column in {self.source!r}")
            column = self.take("str").text
        indices: list[Idx] = []
        if self.at("punct", "_"):
            self.take()
            indices.extend(self.subscript())
        while self.at("punct", "["):
            self.take()
            indices.extend(self.index_list("]"))
            self.take("punct", "]")
        return Ref(name, tuple(indices), column)

    def subscript(self) -> list[Idx]:
        if self.at("punct", "{"):
            self.take()
            out = self.index_list("}")
            self.take("punct", "}")
            return out
        t = self.take()
        # LaTeX: an unbraced subscript is a single character
        if t.kind in ("ident", "num") and len(t.text) > 1:
            rest = t.text[1:]
            self.toks.insert(self.i, Tok("num" if rest[0].isdigit() else "ident", rest))
            t = Tok(t.kind, t.text[0])
        if t.kind == "ident":
            return [Idx(t.text, 0)]
        if t.kind == "num":
            return [Idx(None, int(float(t.text)))]
        raise GrammarError(f"bad subscript {t.text!r} in {self.source!r}")

    def index_list(self, closer: str) -> list[Idx]:
        group: list[Tok] = []
        groups: list[list[Tok]] = []
        depth = 0
        while not (depth == 0 and self.at("punct", closer)):
            t = self.peek()
            if t is None:
                raise GrammarError(f"unterminated index list in {self.source!r}")
            if t.kind == "punct" and t.text in "{[(":
                depth += 1
            elif t.kind == "punct" and t.text in "}])":
                depth -= 1
            if depth == 0 and t.kind == "punct" and t.text == ",":
                groups.append(group)
                group = []
            else:
                group.append(t)
            self.i += 1
        groups.append(group)
        multi = len(groups) > 1
        out: list[Idx] = []
        for g in groups:
            out.extend(_index_group(g, multi, self.source))
        return out

    def set_spec_list(self, stop: Callable[[], bool]) -> list[SetSpec]:
        specs: list[SetSpec] = []
        while not stop():
            if self.at("punct", ","):
                self.take()
                continue
            if self.at("punct", "("):
                # (i, j) tuples
                self.take()
                while not self.at("punct", ")"):
                    if self.at("punct", ","):
                        self.take()
                        continue
                    specs.append(SetSpec(self.take("ident").text))
                self.take("punct", ")")
                continue
            sym = self.take("ident").text
            if len(sym) > 1 and not self.at("cmd", r"\in") and not self.at("op", "="):
                specs.extend(SetSpec(ch) for ch in sym)
                continue
            spec = SetSpec(sym)
            if self.at("cmd", r"\in"):
                self.take()
                if self.at("cmd", r"\{"):
                    spec.values = self.explicit_set()
                else:
                    named = self.take("ident").text
                    if self.at("punct", "_"):
                        self.take()
                        self.subscript()
                    spec.named = named
            elif self.at("op", "="):
                self.take()
                lo = int(float(self.take("num").text))
                spec.values = [lo]  # upper bound filled by caller from ^{...}
            specs.append(spec)
        return specs

    def explicit_set(self) -> list[int]:
        self.take("cmd", r"\{")
        items: list[Union[int, str]] = []
        while not self.at("cmd", r"\}"):
            t = self.take()
            if t.kind == "num":
                items.append(int(float(t.text)))
            elif t.kind == "cmd" and t.text == r"\dots":
                items.append("...")
            elif t.kind == "punct" and t.text == ",":
                continue
            else:
                raise GrammarError(f"unsupported set member {t.text!r} in {self.source!r}")
        self.take("cmd", r"\}")
        values: list[int] = []
        for k, it in enumerate(items):
            if it == "...":
                if k == 0 or k == len(items) - 1:
                    raise GrammarError(f"open range in set in {self.source!r}")
                lo, hi = values[-1], items[k + 1]
                values.extend(range(lo + 1, int(hi)))
            else:
                values.append(int(it))
        return values

    def sum_(self) -> Sum:
        self.take("cmd", r"\sum")
        specs: list[SetSpec] = []
        if self.at("punct", "_"):
            self.take()
            if self.at("punct", "{"):
                self.take()
                specs = self.set_spec_list(lambda: self.at("punct", "}"))
                self.take("punct", "}")
            else:
                t = self.take("ident")
                if len(t.text) > 1:
                    self.toks.insert(self.i, Tok("ident", t.text[1:]))
                specs = [SetSpec(t.text[0])]
        if self.at("punct", "^"):
            self.take()
            if self.at("punct", "{"):
                self.take()
                hi_tok = self.take()
                self.take("punct", "}")
            else:
                hi_tok = self.take()
            if hi_tok.kind != "num":
                hi = None
            else:
                hi = int(float(hi_tok.text))
            if specs and specs[-1].values and len(specs[-1].values) == 1 and hi is not None:
                lo = specs[-1].values[0]
                specs[-1].values = list(range(lo, hi + 1))
        if not specs:
            raise GrammarError(f"sum without index in {self.source!r}")
        for s in specs:
            if s.values is not None and len(s.values) == 1 and s.named is None:
                pass
        body = self.term() if not self.at("cmd", r"\sum") else self.sum_()
        return Sum(specs, body)


def _index_group(g: list[Tok], multi: bool, source: str) -> list[Idx]:
    if not g:
        raise GrammarError(f"empty index in {source!r}")
    if len(g) == 1:
        t = g[0]
        if t.kind == "num":
            return [Idx(None, int(float(t.text)))]
        if t.kind == "ident":
            if multi or len(t.text) == 1:
                if len(t.text) == 1:
                    return [Idx(t.text, 0)]
            # split "it" -> i, t ; "i1" -> i, 1
            out = []
            for m in re.finditer(r"[A-Za-z]|\d+", t.text):
                s = m.group()
                out.append(Idx(None, int(s)) if s.isdigit() else Idx(s, 0))
            return out
    if len(g) == 3 and g[0].kind == "ident" and len(g[0].text) == 1 and g[1].text in "+-" and g[2].kind == "num":
        off = int(float(g[2].text))
        return [Idx(g[0].text, off if g[1].text == "+" else -off)]
    raise GrammarError(f"unsupported index {' '.join(t.text for t in g)!r} in {source!r}")


# --------------------------------------------------------------------------- statements

_DOMAIN_SPLIT = re.compile(r"\\in(?![a-zA-Z])")


def _split_forall(toks: list[Tok]) -> tuple[list[Tok], list[Tok]]:
    depth = 0
    for k, t in enumerate(toks):
        if t.kind == "punct" and t.text in "{([":
            depth += 1
        elif t.kind == "punct" and t.text in "})]":
            depth -= 1
        elif depth == 0 and t.kind == "cmd" and t.text == r"\forall":
            body = toks[:k]
            while body and body[-1].kind == "punct" and body[-1].text == ",":
                body = body[:-1]
            return body, toks[k + 1:]
    body = toks
    while body and body[-1].kind == "punct" and body[-1].text in ",.":
        body = body[:-1]
    return body, []


def _parse_domain(toks: list[Tok], source: str) -> tuple[str, float, float]:
    if not toks:
        raise GrammarError(f"empty domain in {source!r}")
    head = toks[0]
    rest = "".join(t.text for t in toks[1:])
    nonneg = bool(re.fullmatch(r"(?:_\+|\^\+|_\{\+\}|\^\{\+\}|_\{>=0\}|_\{>=0\.?0*\}|\^\{>=0\}|_0\^\+|_\{0\}\^\{\+\})", rest))
    if head.kind == "cmd" and head.text == r"\{":
        members = [t.text for t in toks if t.kind == "num"]
        if sorted(float(m) for m in members) == [0.0, 1.0] and toks[-1].text == r"\}":
            return ("binary", 0.0, 1.0)
        raise GrammarError(f"unsupported set domain in {source!r}")
    if rest and not nonneg:
        raise GrammarError(f"unsupported domain suffix {rest!r} in {source!r}")
    if head.kind == "cmd" and head.text in (r"\ZZ", r"\NN"):
        if head.text == r"\NN" or nonneg:
            return ("integer", 0.0, math.inf)
        return ("integer", -math.inf, math.inf)
    if head.kind == "cmd" and head.text == r"\RR":
        return ("continuous", 0.0, math.inf) if nonneg else ("continuous", -math.inf, math.inf)
    raise GrammarError(f"unsupported domain {head.text!r} in {source!r}")


def parse_statement(text: str, title: str = "") -> Statement:
    """Parse one constraint or domain statement (optionally with a forall clause)."""
    src = clean(text)
    toks = tokenize(src)
    body, forall_toks = _split_forall(toks)
    foralls: list[SetSpec] = []
    if forall_toks:
        fp = _Parser(forall_toks, src)
        foralls = fp.set_spec_list(fp.done)
    # domain statement: refs \in domain, with \in at top level before any comparison
    depth = 0
    split_at = None
    for k, t in enumerate(body):
        if t.kind == "punct" and t.text in "{([":
            depth += 1
        elif t.kind == "punct" and t.text in "})]":
            depth -= 1
        elif t.kind == "op":
            break
        elif depth == 0 and t.kind == "cmd" and t.text == r"\in":
            split_at = k
            break
    if split_at is not None:
        lp = _Parser(body[:split_at], src)
        refs = []
        while not lp.done():
            if lp.at("punct", ","):
                lp.take()
                continue
            refs.append(lp.ref())
        return Statement("domain", refs=refs, domain=_parse_domain(body[split_at + 1:], src),
                         foralls=foralls, title=title, source=src)
    p = _Parser(body, src)
    lhs = p.expr()
    if not p.at("op"):
        raise GrammarError(f"missing comparison operator in {src!r}")
    op = p.take("op").text
    rhs = p.expr()
    if not p.done():
        raise GrammarError(f"trailing input {p.peek().text!r} in {src!r}")
    return Statement("constraint", lhs=lhs, op=op, rhs=rhs, foralls=foralls, title=title, source=src)


_OBJ_HEAD = re.compile(r"^\s*(max(?:imize|imise)?|min(?:imize|imise)?)\b[:\s]*", re.IGNORECASE)


def parse_objective(text: str) -> Statement:
    src = clean(text)
    m = _OBJ_HEAD.match(src)
    if not m:
        raise GrammarError(f"objective must start with max/min: {src!r}")
    sense = "maximize" if m.group(1).lower().startswith("max") else "minimize"
    rest = src[m.end():]
    # drop a leading "Z =" label
    rest = re.sub(r"^\s*[A-Za-z]\s*=(?!=)", "", rest)
    toks = tokenize(rest)
    body, _ = _split_forall(toks)
    p = _Parser(body, src)
    e = p.expr()
    if not p.done():
        raise GrammarError(f"trailing input {p.peek().text!r} in objective {src!r}")
    return Statement("objective", lhs=e, sense=sense, source=src)


# --------------------------------------------------------------------------- expansion

Scalar = float
Array = Union[float, Sequence]


def _shape(value) -> tuple[int, ...]:
    if isinstance(value, (int, float)):
        return ()
    if not value:
        return (0,)
    inner = _shape(value[0])
    return (len(value),) + inner


class Expander:
    """Expand parsed statements into linear rows over concrete variables."""

    def __init__(
        self,
        params: dict[str, Array],
        sets: Optional[dict[str, list[int]]] = None,
        named_sets: Optional[dict[str, list[int]]] = None,
        schema: Optional[Callable[[str], Array]] = None,
        declared_vars: Optional[set[str]] = None,
    ):
        self.params = params
        self.sets: dict[str, list[int]] = dict(sets or {})
        self.named_sets = dict(named_sets or {})
        self.schema = schema
        self.declared_vars = declared_vars
        self.var_order: list[str] = []
        self.var_seen: set[str] = set()
        self.param_dims: dict[tuple[str, int], str] = {}
        self._schema_cache: dict[str, Array] = {}

    # -- parameters
    def _schema_value(self, column: str) -> Array:
        if self.schema is None:
            raise UnboundSymbolError(f"schema[{column}]")
        if column not in self._schema_cache:
            self._schema_cache[column] = self.schema(column)
        return self._schema_cache[column]

    def param_value(self, ref: Ref) -> Optional[Array]:
        if ref.name == "schema" and ref.column is not None:
            return self._schema_value(ref.column)
        return self.params.get(ref.name)

    def _key(self, ref: Ref) -> str:
        return f"schema[{ref.column}]" if ref.column is not None else ref.name

    # -- index inference
    def infer_sets(self, statements: list[Statement]) -> None:
        usage: dict[str, list[tuple[str, int]]] = {}

        def visit(node):
            if isinstance(node, Ref):
                val = self.param_value(node)
                if val is None:
                    return
                shape = _shape(val)
                for d, idx in enumerate(node.indices):
                    if idx.symbol is None:
                        continue
                    if d >= len(shape):
                        raise GrammarError(f"{self._key(node)} has {len(shape)} dimension(s), indexed with {len(node.indices)}")
                    self.param_dims.setdefault((self._key(node), d), idx.symbol)
                    usage.setdefault(idx.symbol, []).append((self._key(node), shape[d]))
            elif isinstance(node, Sum):
                visit(node.body)
            elif isinstance(node, Add):
                for _, t in node.terms:
                    visit(t)
            elif isinstance(node, Mul):
                for f in node.factors:
                    visit(f)
            elif isinstance(node, Div):
                visit(node.num)
                visit(node.den)

        for st in statements:
            for n in (st.lhs, st.rhs):
                if n is not None:
                    visit(n)
        for sym, uses in usage.items():
            if sym in self.sets:
                n = len(self.sets[sym])
                for name, length in uses:
                    if length != n:
                        raise LengthMismatchError(
                            f"{name} has length {length} but index {sym} ranges over {n} members")
                continue
            first_name, first_len = uses[0]
            for name, length in uses[1:]:
                if length != first_len:
                    raise LengthMismatchError(
                        f"index {sym}: {first_name} has length {first_len} but {name} has length {length}")
            self.sets[sym] = list(range(1, first_len + 1))

    # -- evaluation
    def _resolve_set(self, spec: SetSpec) -> list[int]:
        if spec.values is not None:
            return spec.values
        if spec.named is not None and spec.named in self.named_sets:
            return self.named_sets[spec.named]
        if spec.symbol in self.sets:
            return self.sets[spec.symbol]
        raise GrammarError(f"cannot infer the range of index {spec.symbol!r}")

    def bindings(self, specs: list[SetSpec], env: Optional[dict[str, int]] = None):
        env = dict(env or {})
        if not specs:
            yield env
            return
        first, rest = specs[0], specs[1:]
        for v in self._resolve_set(first):
            env[first.symbol] = v
            yield from self.bindings(rest, env)

    def _idx_values(self, ref: Ref, env: dict[str, int]) -> list[int]:
        vals = []
        for idx in ref.indices:
            if idx.symbol is None:
                vals.append(idx.value)
            else:
                if idx.symbol not in env:
                    raise GrammarError(f"free index {idx.symbol!r} in {self._key(ref)}")
                vals.append(env[idx.symbol] + idx.value)
        return vals

    def _lookup(self, ref: Ref, value: Array, env: dict[str, int]) -> float:
        vals = self._idx_values(ref, env)
        cur = value
        for d, v in enumerate(vals):
            if isinstance(cur, (int, float)):
                raise GrammarError(f"{self._key(ref)} is not indexable at dimension {d + 1}")
            sym = self.param_dims.get((self._key(ref), d))
            members = self.sets.get(sym) if sym else None
            if members is not None and v in members:
                pos = members.index(v)
            else:
                pos = v - 1
            if not 0 <= pos < len(cur):
                raise GrammarError(f"{self._key(ref)} index {v} out of range (length {len(cur)})")
            cur = cur[pos]
        # a one-row column read without an index is a scalar
        while not isinstance(cur, (int, float)) and len(cur) == 1:
            cur = cur[0]
        if not isinstance(cur, (int, float)):
            raise GrammarError(f"{self._key(ref)} used with too few indices")
        return float(cur)

    def var_name(self, ref: Ref, env: dict[str, int]) -> str:
        vals = self._idx_values(ref, env)
        return ref.name if not vals else ref.name + "_" + "_".join(str(v) for v in vals)

    def _note_var(self, name: str) -> None:
        if name not in self.var_seen:
            self.var_seen.add(name)
            self.var_order.append(name)

    def evaluate(self, node, env: dict[str, int]) -> tuple[dict[str, float], float]:
        if isinstance(node, Num):
            return {}, node.value
        if isinstance(node, Ref):
            value = self.param_value(node)
            if value is not None:
                return {}, self._lookup(node, value, env)
            if node.column is not None or (self.declared_vars is not None and node.name not in self.declared_vars):
                raise UnboundSymbolError(self._key(node))
            name = self.var_name(node, env)
            self._note_var(name)
            return {name: 1.0}, 0.0
        if isinstance(node, Add):
            coefs: dict[str, float] = {}
            const = 0.0
            for sign, t in node.terms:
                c, k = self.evaluate(t, env)
                for v, a in c.items():
                    coefs[v] = coefs.get(v, 0.0) + sign * a
                const += sign * k
            return coefs, const
        if isinstance(node, Mul):
            coefs, const = {}, 1.0
            linear = None
            for f in node.factors:
                c, k = self.evaluate(f, env)
                if c:
                    if linear is not None:
                        names = sorted(set(linear) | set(c))
                        raise UnboundSymbolError(names[0], "a product of two unknowns")
                    linear = (c, k)
                else:
                    const *= k
            if linear is None:
                return {}, const
            c, k = linear
            return {v: a * const for v, a in c.items()}, k * const
        if isinstance(node, Div):
            c, k = self.evaluate(node.num, env)
            dc, dk = self.evaluate(node.den, env)
            if dc:
                raise GrammarError("division by an expression containing variables")
            if dk == 0:
                raise GrammarError("division by zero")
            return {v: a / dk for v, a in c.items()}, k / dk
        if isinstance(node, Sum):
            coefs, const = {}, 0.0
            for b in self.bindings(node.specs, env):
                c, k = self.evaluate(node.body, b)
                for v, a in c.items():
                    coefs[v] = coefs.get(v, 0.0) + a
                const += k
            return coefs, const
        raise GrammarError(f"cannot evaluate {node!r}")
