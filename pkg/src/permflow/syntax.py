"""Lexer, parser, validator and pretty-printer for AP-annotated programs."""

from __future__ import annotations

import re
from dataclasses import dataclass, field as _field
from typing import Iterator, Optional, Union

PERM_KINDS = ("unq", "shr", "imm", "none")
KEYWORDS = {
    "class", "attr", "let", "in", "end", "new", "group", "split", "main",
    "null", "this",
}
DEFAULT_GROUP = "default"


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int, filename: str = "<input>"):
        super().__init__(f"{filename}:{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col
        self.filename = filename


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    message: str

    def format(self, filename: str = "<input>") -> str:
        return f"{filename}:{self.line}:{self.col}: {self.message}"


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Permission:
    kind: str
    group: Optional[str] = None

    def __post_init__(self):
        if self.kind not in PERM_KINDS:
            raise ValueError(f"unknown permission {self.kind!r}")
        if (self.kind == "shr") != (self.group is not None):
            raise ValueError("shr carries exactly one group; other kinds carry none")

    def render(self) -> str:
        return f"shr:{self.group}" if self.kind == "shr" else self.kind


@dataclass(frozen=True)
class TypeRef:
    name: str
    dg_args: tuple[str, ...] = ()

    def render(self) -> str:
        if self.dg_args:
            return f"{self.name}<{','.join(self.dg_args)}>"
        return self.name


@dataclass(frozen=True)
class VarDecl:
    type: TypeRef
    name: str
    line: int = _field(default=0, compare=False)
    col: int = _field(default=0, compare=False)


@dataclass(frozen=True)
class Reference:
    base: str                      # variable name or "this"
    field: Optional[str] = None
    line: int = _field(default=0, compare=False)
    col: int = _field(default=0, compare=False)

    def render(self) -> str:
        return f"{self.base}.{self.field}" if self.field else self.base


@dataclass(frozen=True)
class Let:
    decls: tuple[VarDecl, ...]
    body: "Statement"
    line: int = _field(default=0, compare=False)


@dataclass(frozen=True)
class Assign:
    lhs: Reference
    group: Optional[str]           # None means the predefined default group
    rhs: Optional[Reference]       # None means null
    line: int = _field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    target: Reference
    method: str
    args: tuple[Reference, ...]
    line: int = _field(default=0, compare=False)


@dataclass(frozen=True)
class New:
    lhs: Reference
    class_name: str
    dg_args: tuple[str, ...]
    args: tuple[Reference, ...]
    line: int = _field(default=0, compare=False)


@dataclass(frozen=True)
class Split:
    groups: tuple[str, ...]
    body: tuple["Statement", ...]
    line: int = _field(default=0, compare=False)


@dataclass(frozen=True)
class Block:
    stmts: tuple["Statement", ...]
    line: int = _field(default=0, compare=False)


@dataclass(frozen=True)
class GroupDecl:
    names: tuple[str, ...]
    line: int = _field(default=0, compare=False)


Statement = Union[Let, Assign, Call, New, Split, Block, GroupDecl]


@dataclass(frozen=True)
class MethodDecl:
    name: str
    params: tuple[VarDecl, ...]
    pre: tuple[tuple[str, Permission], ...]
    post: tuple[tuple[str, Permission], ...]
    body: Block
    line: int = _field(default=0, compare=False)
    col: int = _field(default=0, compare=False)
    has_body: bool = _field(default=True, compare=False)

    def pre_of(self, name: str) -> Permission:
        return dict(self.pre)[name]

    def post_of(self, name: str) -> Permission:
        return dict(self.post)[name]


@dataclass(frozen=True)
class ClassDecl:
    name: str
    dg_params: tuple[str, ...]
    fields: tuple[VarDecl, ...]
    constructors: tuple[MethodDecl, ...]
    methods: tuple[MethodDecl, ...]
    line: int = _field(default=0, compare=False)
    col: int = _field(default=0, compare=False)

    def member(self, name: str) -> Optional[MethodDecl]:
        for m in self.constructors + self.methods:
            if m.name == name:
                return m
        return None

    def field_type(self, name: str) -> Optional[TypeRef]:
        for f in self.fields:
            if f.name == name:
                return f.type
        return None


@dataclass(frozen=True)
class MainDecl:
    body: Block
    line: int = _field(default=0, compare=False)

    @property
    def group_decls(self) -> list[str]:
        return [g for s in walk_statements(self.body) if isinstance(s, GroupDecl) for g in s.names]


@dataclass(frozen=True)
class SourceProgram:
    classes: tuple[ClassDecl, ...]
    main: MainDecl

    def class_named(self, name: str) -> Optional[ClassDecl]:
        for c in self.classes:
            if c.name == name:
                return c
        return None


def walk_statements(s: Statement) -> Iterator[Statement]:
    yield s
    if isinstance(s, Let):
        yield from walk_statements(s.body)
    elif isinstance(s, (Block, Split)):
        for t in (s.stmts if isinstance(s, Block) else s.body):
            yield from walk_statements(t)


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>//[^\n]*)"
    r"|(?P<ident>[A-Za-z][A-Za-z0-9_]*)"
    r"|(?P<op>:=|=>|[{}()<>,.:])"
)


@dataclass(frozen=True)
class Token:
    kind: str      # "ident", "kw", "op", "eof"
    text: str
    line: int
    col: int


def tokenize(text: str, filename: str = "<input>") -> list[Token]:
    tokens: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1, filename)
        kind = m.lastgroup
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "ident":
            word = m.group()
            tokens.append(Token("kw" if word in KEYWORDS else "ident", word, line, col))
        elif kind == "op":
            tokens.append(Token("op", m.group(), line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, text: str, filename: str):
        self.filename = filename
        self.toks = tokenize(text, filename)
        self.i = 0

    @property
    def cur(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Optional[Token] = None) -> ParseError:
        tok = tok or self.cur
        found = tok.text or "end of input"
        return ParseError(f"{msg} (found {found!r})", tok.line, tok.col, self.filename)

    def at(self, text: str) -> bool:
        return self.cur.kind in ("op", "kw") and self.cur.text == text

    def accept(self, text: str) -> Optional[Token]:
        if self.at(text):
            tok = self.cur
            self.i += 1
            return tok
        return None

    def expect(self, text: str) -> Token:
        tok = self.accept(text)
        if tok is None:
            raise self.error(f"expected {text!r}")
        return tok

    def ident(self, what: str = "identifier") -> Token:
        if self.cur.kind != "ident":
            raise self.error(f"expected {what}")
        tok = self.cur
        self.i += 1
        return tok

    def ident_list(self, close: str) -> tuple[str, ...]:
        names = [self.ident("group name").text]
        while self.accept(","):
            names.append(self.ident("group name").text)
        self.expect(close)
        return tuple(names)

    # program ::= class* main
    def program(self) -> SourceProgram:
        classes = []
        while self.at("class"):
            classes.append(self.class_decl())
        main = self.main_decl()
        if self.cur.kind != "eof":
            raise self.error("unexpected input after main")
        return SourceProgram(tuple(classes), main)

    def class_decl(self) -> ClassDecl:
        kw = self.expect("class")
        name = self.ident("class name").text
        dg_params: tuple[str, ...] = ()
        if self.accept("<"):
            dg_params = self.ident_list(">")
        self.expect("{")
        fields: list[VarDecl] = []
        ctors: list[MethodDecl] = []
        methods: list[MethodDecl] = []
        while not self.at("}"):
            if self.accept("attr"):
                fields.append(self.var_decl())
                while self.accept(","):
                    fields.append(self.var_decl())
            else:
                m = self.method_decl()
                (ctors if m.name == name else methods).append(m)
        self.expect("}")
        return ClassDecl(name, dg_params, tuple(fields), tuple(ctors), tuple(methods), kw.line, kw.col)

    def type_ref(self) -> TypeRef:
        name = self.ident("type name").text
        dg_args: tuple[str, ...] = ()
        if self.accept("<"):
            dg_args = self.ident_list(">")
        return TypeRef(name, dg_args)

    def var_decl(self) -> VarDecl:
        tok = self.cur
        t = self.type_ref()
        return VarDecl(t, self.ident("variable name").text, tok.line, tok.col)

    def method_decl(self) -> MethodDecl:
        tok = self.ident("member name")
        self.expect("(")
        params: list[VarDecl] = []
        if not self.at(")"):
            params.append(self.var_decl())
            while self.accept(","):
                params.append(self.var_decl())
        self.expect(")")
        pre = self.perm_list()
        self.expect("=>")
        post = self.perm_list()
        has_body = self.at("{")
        body = self.block() if has_body else Block((), tok.line)
        return MethodDecl(tok.text, tuple(params), pre, post, body, tok.line, tok.col, has_body)

    def perm_list(self) -> tuple[tuple[str, Permission], ...]:
        perms = [self.perm_item()]
        while self.accept(","):
            perms.append(self.perm_item())
        return tuple(perms)

    def perm_item(self) -> tuple[str, Permission]:
        tok = self.cur
        if tok.kind != "ident" or tok.text not in PERM_KINDS:
            raise self.error("expected permission (unq, shr:g, imm, none)")
        self.i += 1
        group = None
        if tok.text == "shr":
            self.expect(":")
            group = self.ident("data group").text
        self.expect("(")
        if self.accept("this"):
            target = "this"
        else:
            target = self.ident("parameter name").text
        self.expect(")")
        return target, Permission(tok.text, group)

    def main_decl(self) -> MainDecl:
        kw = self.expect("main")
        if self.accept("("):
            self.expect(")")
        body = self.block()
        return MainDecl(Block(body.stmts, kw.line), kw.line)

    def block(self) -> Block:
        open_tok = self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.cur.kind == "eof":
                raise self.error("unterminated block")
            stmts.append(self.statement())
        self.expect("}")
        return Block(tuple(stmts), open_tok.line)

    def statement(self) -> Statement:
        tok = self.cur
        if self.at("{"):
            return self.block()
        if self.accept("group"):
            self.expect("<")
            return GroupDecl(self.ident_list(">"), tok.line)
        if self.accept("let"):
            return self.let_stmt(tok)
        if self.accept("split"):
            if self.accept("<"):
                groups = self.ident_list(">")
            else:
                self.expect("(")
                groups = self.ident_list(")")
            body = self.block()
            return Split(groups, body.stmts, tok.line)
        return self.simple_statement()

    def let_stmt(self, tok: Token) -> Let:
        decls = [self.var_decl()]
        while self.accept(","):
            decls.append(self.var_decl())
        self.expect("in")
        body = []
        while not (self.at("end") or self.at("}") or self.cur.kind == "eof"):
            body.append(self.statement())
        self.accept("end")
        if len(body) == 1:
            stmt = body[0]
        else:
            stmt = Block(tuple(body), tok.line)
        return Let(tuple(decls), stmt, tok.line)

    def path(self) -> list[Token]:
        if self.at("this"):
            parts = [self.cur]
            self.i += 1
        else:
            parts = [self.ident("reference")]
        while self.at(".") and self.peek().kind == "ident":
            self.i += 1
            parts.append(self.ident("field name"))
        return parts

    def reference(self) -> Reference:
        tok = self.cur
        parts = self.path()
        return self._ref_of(parts, tok)

    def _ref_of(self, parts: list[Token], tok: Token) -> Reference:
        if len(parts) > 2:
            raise ParseError("references select at most one field", parts[2].line, parts[2].col, self.filename)
        return Reference(parts[0].text, parts[1].text if len(parts) == 2 else None, tok.line, tok.col)

    def args(self) -> tuple[Reference, ...]:
        self.expect("(")
        out = []
        if not self.at(")"):
            out.append(self.reference())
            while self.accept(","):
                out.append(self.reference())
        self.expect(")")
        return tuple(out)

    def simple_statement(self) -> Statement:
        tok = self.cur
        if tok.kind not in ("ident",) and not self.at("this"):
            raise self.error("expected statement")
        parts = self.path()
        if self.at("("):
            if len(parts) < 2:
                raise self.error("method call needs a receiver")
            target = self._ref_of(parts[:-1], tok)
            return Call(target, parts[-1].text, self.args(), tok.line)
        lhs = self._ref_of(parts, tok)
        group = None
        if self.accept("<"):
            group = self.ident("data group").text
            self.expect(">")
        self.expect(":=")
        if self.accept("null"):
            return Assign(lhs, group, None, tok.line)
        if self.accept("new"):
            if group is not None:
                raise self.error("object creation takes no group annotation", tok)
            cname = self.ident("class name").text
            dg_args: tuple[str, ...] = ()
            if self.accept("<"):
                dg_args = self.ident_list(">")
            return New(lhs, cname, dg_args, self.args(), tok.line)
        return Assign(lhs, group, self.reference(), tok.line)


def parse_program(text: str, filename: str = "<input>") -> SourceProgram:
    """Parse source text; raises ParseError with line/column on failure."""
    return _Parser(text, filename).program()


def parse_file(path) -> SourceProgram:
    with open(path, encoding="utf-8") as fh:
        return parse_program(fh.read(), str(path))


# ---------------------------------------------------------------------------
# Validation

class _Validator:
    def __init__(self, prog: SourceProgram):
        self.prog = prog
        self.diags: list[Diagnostic] = []
        self.classes: dict[str, ClassDecl] = {}
        self.main_groups = set(prog.main.group_decls) | {DEFAULT_GROUP}
        self.edges: dict[str, set[str]] = {}
        self.edge_lines: dict[tuple[str, str], int] = {}

    def report(self, line: int, col: int, msg: str):
        self.diags.append(Diagnostic(line, col, msg))

    def run(self) -> list[Diagnostic]:
        for c in self.prog.classes:
            if c.name in self.classes:
                self.report(c.line, c.col, f"duplicate class {c.name}")
            else:
                self.classes[c.name] = c
        for c in self.prog.classes:
            self.check_class(c)
        self.check_main()
        self.check_cycles()
        self.diags.sort(key=lambda d: (d.line, d.col, d.message))
        return self.diags

    def check_type(self, t: TypeRef, line: int, col: int, groups: set[str]):
        c = self.classes.get(t.name)
        if c is None:
            self.report(line, col, f"unresolved type {t.name}")
            return
        if t.dg_args and len(t.dg_args) != len(c.dg_params):
            self.report(line, col, f"arity mismatch: {t.name} takes {len(c.dg_params)} data group(s), got {len(t.dg_args)}")
        for g in t.dg_args:
            if g not in groups:
                self.report(line, col, f"undeclared data group {g}")

    def check_class(self, c: ClassDecl):
        groups = set(c.dg_params) | self.main_groups
        if len(set(c.dg_params)) != len(c.dg_params):
            self.report(c.line, c.col, f"duplicate data group parameter in class {c.name}")
        seen: set[str] = set()
        for f in c.fields:
            if f.name in seen:
                self.report(f.line, f.col, f"duplicate field {c.name}.{f.name}")
            seen.add(f.name)
            self.check_type(f.type, f.line, f.col, groups)
        names: set[str] = set()
        for m in c.methods:
            if m.name in names:
                self.report(m.line, m.col, f"duplicate method {c.name}.{m.name}")
            names.add(m.name)
        if len(c.constructors) > 1:
            k = c.constructors[1]
            self.report(k.line, k.col, f"duplicate constructor {c.name}")
        for m in c.constructors + c.methods:
            self.check_member(c, m, groups)

    def check_member(self, c: ClassDecl, m: MethodDecl, groups: set[str]):
        key = f"{c.name}.{m.name}"
        self.edges.setdefault(key, set())
        scope: dict[str, TypeRef] = {"this": TypeRef(c.name, c.dg_params)}
        for p in m.params:
            if p.name in scope:
                self.report(p.line, p.col, f"duplicate parameter {p.name} in {key}")
            scope[p.name] = p.type
            self.check_type(p.type, p.line, p.col, groups)
        expected = ["this"] + [p.name for p in m.params]
        for label, perms in (("pre", m.pre), ("post", m.post)):
            if [t for t, _ in perms] != expected:
                self.report(m.line, m.col,
                            f"{label}-permissions of {key} must cover this and each parameter in order")
            for _, perm in perms:
                if perm.kind == "shr" and perm.group not in groups:
                    self.report(m.line, m.col, f"undeclared data group {perm.group}")
        if m.name == c.name:
            pre = dict(m.pre).get("this")
            post = dict(m.post).get("this")
            if pre is None or pre.kind != "none":
                self.report(m.line, m.col, f"constructor {key} must require none(this)")
            if post is None or post.kind != "unq":
                self.report(m.line, m.col, f"constructor {key} must ensure unq(this)")
        self.check_stmt(m.body, scope, groups, key)

    def check_main(self):
        groups = self.main_groups
        self.check_stmt(self.prog.main.body, {}, groups, None)

    def ref_type(self, r: Reference, scope: dict[str, TypeRef]) -> Optional[TypeRef]:
        t = scope.get(r.base)
        if t is None:
            self.report(r.line, r.col, f"unresolved name {r.base}")
            return None
        if r.field is None:
            return t
        c = self.classes.get(t.name)
        if c is None:
            return None
        ft = c.field_type(r.field)
        if ft is None:
            self.report(r.line, r.col, f"unresolved field {t.name}.{r.field}")
        return ft

    def add_edge(self, owner: Optional[str], callee: str, line: int):
        if owner is not None:
            self.edges.setdefault(owner, set()).add(callee)
            self.edge_lines.setdefault((owner, callee), line)

    def check_args(self, member: MethodDecl, args, scope, line: int, what: str):
        if len(args) != len(member.params):
            self.report(line, 1, f"arity mismatch: {what} expects {len(member.params)} argument(s), got {len(args)}")
        for a in args:
            self.ref_type(a, scope)

    def check_stmt(self, s: Statement, scope: dict[str, TypeRef], groups: set[str], owner: Optional[str]):
        if isinstance(s, Block):
            for t in s.stmts:
                self.check_stmt(t, scope, groups, owner)
        elif isinstance(s, Let):
            inner = dict(scope)
            seen: set[str] = set()
            for d in s.decls:
                if d.name in seen:
                    self.report(d.line, d.col, f"duplicate local {d.name}")
                seen.add(d.name)
                self.check_type(d.type, d.line, d.col, groups)
                inner[d.name] = d.type
            self.check_stmt(s.body, inner, groups, owner)
        elif isinstance(s, GroupDecl):
            if owner is not None:
                self.report(s.line, 1, "data groups can only be declared in main")
        elif isinstance(s, Split):
            for g in s.groups:
                if g not in groups:
                    self.report(s.line, 1, f"undeclared data group {g}")
            for t in s.body:
                self.check_stmt(t, scope, groups, owner)
        elif isinstance(s, Assign):
            self.ref_type(s.lhs, scope)
            if s.rhs is not None:
                self.ref_type(s.rhs, scope)
                if s.rhs == s.lhs:
                    self.report(s.line, s.lhs.col, f"self assignment {s.lhs.render()} := {s.rhs.render()}")
        elif isinstance(s, Call):
            t = self.ref_type(s.target, scope)
            if t is None or t.name not in self.classes:
                return
            c = self.classes[t.name]
            m = next((m for m in c.methods if m.name == s.method), None)
            if m is None:
                self.report(s.line, s.target.col, f"unresolved method {c.name}.{s.method}")
                for a in s.args:
                    self.ref_type(a, scope)
                return
            self.add_edge(owner, f"{c.name}.{m.name}", s.line)
            self.check_args(m, s.args, scope, s.line, f"{c.name}.{m.name}")
        elif isinstance(s, New):
            self.ref_type(s.lhs, scope)
            c = self.classes.get(s.class_name)
            if c is None:
                self.report(s.line, s.lhs.col, f"unresolved class {s.class_name}")
                return
            if len(s.dg_args) != len(c.dg_params):
                self.report(s.line, s.lhs.col,
                            f"arity mismatch: {c.name} takes {len(c.dg_params)} data group(s), got {len(s.dg_args)}")
            for g in s.dg_args:
                if g not in groups:
                    self.report(s.line, s.lhs.col, f"undeclared data group {g}")
            if not c.constructors:
                self.report(s.line, s.lhs.col, f"unresolved constructor {c.name}")
                return
            k = c.constructors[0]
            self.add_edge(owner, f"{c.name}.{k.name}", s.line)
            self.check_args(k, s.args, scope, s.line, f"new {c.name}")

    def check_cycles(self):
        color: dict[str, int] = {}
        stack: list[str] = []
        reported: set[frozenset] = set()

        def visit(n: str):
            color[n] = 1
            stack.append(n)
            for m in sorted(self.edges.get(n, ())):
                if color.get(m, 0) == 0:
                    visit(m)
                elif color.get(m) == 1:
                    cyc = stack[stack.index(m):] + [m]
                    key = frozenset(cyc)
                    if key not in reported:
                        reported.add(key)
                        line = self.edge_lines.get((n, m), 0)
                        self.report(line, 1, "cyclic definition " + "→".join(x.split(".")[1] for x in cyc)
                                    + " (" + " -> ".join(cyc) + ")")
            stack.pop()
            color[n] = 2

        for n in sorted(self.edges):
            if color.get(n, 0) == 0:
                visit(n)


def validate_program(prog: SourceProgram) -> list[Diagnostic]:
    """Return one diagnostic per well-formedness violation; [] means valid."""
    out = []
    for d in _Validator(prog).run():
        if d not in out:
            out.append(d)
    return out


# ---------------------------------------------------------------------------
# Rendering

def _render_perms(perms) -> str:
    return ",".join(f"{p.render()}({t})" for t, p in perms)


def _render_args(args) -> str:
    return ",".join(a.render() for a in args)


def render_statement(s: Statement, indent: int = 1) -> list[str]:
    pad = "  " * indent
    if isinstance(s, Block):
        return [pad + "{"] + [l for t in s.stmts for l in render_statement(t, indent + 1)] + [pad + "}"]
    if isinstance(s, Let):
        decls = ", ".join(f"{d.type.render()} {d.name}" for d in s.decls)
        inner = render_statement(s.body, indent + 1)
        return [f"{pad}let {decls} in"] + inner + [pad + "end"]
    if isinstance(s, GroupDecl):
        return [f"{pad}group<{','.join(s.names)}>"]
    if isinstance(s, Split):
        inner = [l for t in s.body for l in render_statement(t, indent + 1)]
        return [f"{pad}split<{','.join(s.groups)}>{{"] + inner + [pad + "}"]
    if isinstance(s, Assign):
        g = f"<{s.group}>" if s.group is not None else ""
        rhs = s.rhs.render() if s.rhs is not None else "null"
        return [f"{pad}{s.lhs.render()}{g} := {rhs}"]
    if isinstance(s, Call):
        return [f"{pad}{s.target.render()}.{s.method}({_render_args(s.args)})"]
    if isinstance(s, New):
        g = f"<{','.join(s.dg_args)}>" if s.dg_args else ""
        return [f"{pad}{s.lhs.render()} := new {s.class_name}{g}({_render_args(s.args)})"]
    raise TypeError(s)


def render_program(prog: SourceProgram) -> str:
    out: list[str] = []
    for c in prog.classes:
        g = f"<{','.join(c.dg_params)}>" if c.dg_params else ""
        out.append(f"class {c.name}{g} {{")
        if c.fields:
            out.append("  attr " + ", ".join(f"{f.type.render()} {f.name}" for f in c.fields))
        for m in c.constructors + c.methods:
            params = ", ".join(f"{p.type.render()} {p.name}" for p in m.params)
            out.append(f"  {m.name}({params}) {_render_perms(m.pre)} => {_render_perms(m.post)} {{")
            for t in m.body.stmts:
                out.extend(render_statement(t, 2))
            out.append("  }")
        out.append("}")
    out.append("main() {")
    for t in prog.main.body.stmts:
        out.extend(render_statement(t, 1))
    out.append("}")
    return "\n".join(out) + "\n"
