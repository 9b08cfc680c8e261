"""Declaration-level Java source grammar.

Parses compilation units down to type and member declarations; method and
initializer bodies are captured verbatim by token-level brace matching, so
expression syntax inside bodies is never interpreted. Strings, char
literals, text blocks and comments are handled by the tokenizer, which
means braces inside them never confuse the matcher.

Used both to extract API signatures from library sources and to decide
structural validity of generated candidates without invoking a compiler.
"""

from __future__ import annotations

from dataclasses import dataclass, field

MODIFIERS = {
    "public", "protected", "private", "static", "final", "abstract",
    "default", "native", "synchronized", "transient", "volatile",
    "strictfp", "sealed",
}

TYPE_KEYWORDS = {"class", "interface", "enum", "record"}

_PUNCT_CHARS = set("{}()[];,.@<>=+-*/%!&|^~?:")

_IDENT_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_$")
_IDENT_CONT = _IDENT_START | set("0123456789")
_NUM_CONT = set("0123456789abcdefABCDEFxXlLdDbB_.")


class JavaSyntaxError(Exception):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.message = message
        self.line = line


@dataclass
class Token:
    kind: str  # "ident" | "number" | "string" | "char" | "punct"
    text: str
    line: int
    start: int
    end: int


@dataclass
class MethodDecl:
    name: str
    parameters: list[tuple[str, str]]  # (name, type text)
    return_type: str
    body: str  # verbatim text between the body braces; "" when abstract
    line: int
    modifiers: set[str] = field(default_factory=set)


@dataclass
class TypeDecl:
    kind: str  # "class" | "interface" | "enum" | "record" | "annotation"
    name: str
    line: int
    modifiers: set[str] = field(default_factory=set)
    methods: list[MethodDecl] = field(default_factory=list)
    nested: list["TypeDecl"] = field(default_factory=list)

    @property
    def interface_like(self) -> bool:
        return self.kind in ("interface", "annotation")


@dataclass
class CompilationUnit:
    package: str | None
    types: list[TypeDecl]


def tokenize(src: str) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    n = len(src)
    line = 1
    while i < n:
        ch = src[i]
        if ch == "\n":
            line += 1
            i += 1
            continue
        if ch in " \t\r\f":
            i += 1
            continue
        if src.startswith("//", i):
            j = src.find("\n", i)
            i = n if j < 0 else j
            continue
        if src.startswith("/*", i):
            j = src.find("*/", i + 2)
            if j < 0:
                raise JavaSyntaxError("unterminated block comment", line)
            line += src.count("\n", i, j)
            i = j + 2
            continue
        if src.startswith('"""', i):
            j = src.find('"""', i + 3)
            if j < 0:
                raise JavaSyntaxError("unterminated text block", line)
            tokens.append(Token("string", src[i:j + 3], line, i, j + 3))
            line += src.count("\n", i, j)
            i = j + 3
            continue
        if ch == '"' or ch == "'":
            start = i
            i += 1
            while i < n:
                if src[i] == "\\":
                    i += 2
                    continue
                if src[i] == ch:
                    break
                if src[i] == "\n":
                    raise JavaSyntaxError("unterminated literal", line)
                i += 1
            if i >= n:
                raise JavaSyntaxError("unterminated literal", line)
            i += 1
            kind = "string" if ch == '"' else "char"
            tokens.append(Token(kind, src[start:i], line, start, i))
            continue
        if ch in _IDENT_START:
            start = i
            while i < n and src[i] in _IDENT_CONT:
                i += 1
            tokens.append(Token("ident", src[start:i], line, start, i))
            continue
        if ch.isdigit():
            start = i
            while i < n and src[i] in _NUM_CONT:
                # exponent sign: 1e+9, 0x1p-3
                if src[i] in "eEpP" and i + 1 < n and src[i + 1] in "+-":
                    i += 2
                    continue
                i += 1
            while i > start + 1 and src[i - 1] == ".":
                i -= 1  # do not swallow a trailing structural dot
            tokens.append(Token("number", src[start:i], line, start, i))
            continue
        if ch in _PUNCT_CHARS:
            tokens.append(Token("punct", ch, line, i, i + 1))
            i += 1
            continue
        raise JavaSyntaxError(f"unexpected character {ch!r}", line)
    return tokens


_OPEN_FOR = {"}": "{", ")": "(", "]": "["}


class _Parser:
    def __init__(self, src: str, tokens: list[Token]):
        self.src = src
        self.tokens = tokens
        self.pos = 0

    # -- token stream helpers ------------------------------------------------

    def _eof_line(self) -> int:
        return self.tokens[-1].line if self.tokens else 1

    def peek(self, offset: int = 0) -> Token | None:
        idx = self.pos + offset
        return self.tokens[idx] if idx < len(self.tokens) else None

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.text == text

    def at_ident(self) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == "ident"

    def advance(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise JavaSyntaxError("unexpected end of input", self._eof_line())
        self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok is None:
            raise JavaSyntaxError(f"expected {text!r} but reached end of input", self._eof_line())
        if tok.text != text:
            raise JavaSyntaxError(f"expected {text!r} but found {tok.text!r}", tok.line)
        return self.advance()

    def expect_ident(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise JavaSyntaxError("expected identifier but reached end of input", self._eof_line())
        if tok.kind != "ident":
            raise JavaSyntaxError(f"expected identifier but found {tok.text!r}", tok.line)
        return self.advance()

    def skip_balanced(self, open_text: str, close_text: str) -> tuple[Token, Token]:
        """Consume a balanced group; returns (opening, closing) tokens."""
        opening = self.expect(open_text)
        depth = 1
        while depth:
            tok = self.advance()
            if tok.text == open_text:
                depth += 1
            elif tok.text == close_text:
                depth -= 1
        return opening, tok

    # -- grammar -------------------------------------------------------------

    def parse_unit(self) -> CompilationUnit:
        package = None
        while self.at("@") and not self._at_annotation_decl():
            self.parse_annotation()
        if self.at("package"):
            self.advance()
            package = self.parse_qualified_name()
            self.expect(";")
        while self.at("import"):
            self.advance()
            if self.at("static"):
                self.advance()
            self.parse_qualified_name()
            if self.at("."):
                self.advance()
                self.expect("*")
            if self.at("*"):
                self.advance()
            self.expect(";")
        types: list[TypeDecl] = []
        while self.peek() is not None:
            if self.at(";"):
                self.advance()
                continue
            types.append(self.parse_type_decl())
        if not types:
            raise JavaSyntaxError("no type declaration in compilation unit", self._eof_line())
        return CompilationUnit(package=package, types=types)

    def parse_qualified_name(self) -> str:
        parts = [self.expect_ident().text]
        while self.at(".") and self.peek(1) is not None and self.peek(1).kind == "ident":
            self.advance()
            parts.append(self.expect_ident().text)
        return ".".join(parts)

    def _at_annotation_decl(self) -> bool:
        nxt = self.peek(1)
        return self.at("@") and nxt is not None and nxt.text == "interface"

    def parse_annotation(self) -> None:
        self.expect("@")
        self.parse_qualified_name()
        if self.at("("):
            self.skip_balanced("(", ")")

    def parse_modifiers(self) -> set[str]:
        mods: set[str] = set()
        while True:
            tok = self.peek()
            if tok is None:
                return mods
            if tok.text == "@" and not self._at_annotation_decl():
                self.parse_annotation()
                continue
            if tok.kind == "ident" and tok.text in MODIFIERS:
                mods.add(self.advance().text)
                continue
            # contextual "non-sealed" lexes as three tokens
            if tok.text == "non" and self.peek(1) is not None and self.peek(1).text == "-":
                third = self.peek(2)
                if third is not None and third.text == "sealed":
                    self.advance(); self.advance(); self.advance()
                    mods.add("non-sealed")
                    continue
            return mods

    def parse_type_decl(self, modifiers: set[str] | None = None) -> TypeDecl:
        if modifiers is None:
            modifiers = self.parse_modifiers()
        tok = self.peek()
        if tok is None:
            raise JavaSyntaxError("expected type declaration", self._eof_line())
        if self._at_annotation_decl():
            self.advance()
            self.advance()
            kind = "annotation"
        elif tok.kind == "ident" and tok.text in TYPE_KEYWORDS:
            kind = self.advance().text
        else:
            raise JavaSyntaxError(
                f"expected type declaration but found {tok.text!r}", tok.line
            )
        name_tok = self.expect_ident()
        decl = TypeDecl(kind=kind, name=name_tok.text, line=name_tok.line, modifiers=modifiers)
        if self.at("<"):
            self.skip_balanced("<", ">")
        if kind == "record":
            self.skip_balanced("(", ")")
        # extends / implements / permits clauses: anything up to the body
        angle = 0
        while not (self.at("{") and angle == 0):
            tok = self.advance()
            if tok.text == "<":
                angle += 1
            elif tok.text == ">":
                angle -= 1
        self.parse_type_body(decl)
        return decl

    def parse_type_body(self, decl: TypeDecl) -> None:
        self.expect("{")
        if decl.kind == "enum":
            self._skip_enum_constants()
        while not self.at("}"):
            if self.peek() is None:
                raise JavaSyntaxError(f"unterminated body of {decl.name}", self._eof_line())
            if self.at(";"):
                self.advance()
                continue
            self.parse_member(decl)
        self.expect("}")

    def _skip_enum_constants(self) -> None:
        while True:
            if self.at(";"):
                self.advance()
                return
            if self.at("}") or self.peek() is None:
                return
            while self.at("@"):
                self.parse_annotation()
            self.expect_ident()
            if self.at("("):
                self.skip_balanced("(", ")")
            if self.at("{"):
                self.skip_balanced("{", "}")
            if self.at(","):
                self.advance()
                continue
            # constants without trailing comma fall through to ';' or '}'

    def parse_member(self, decl: TypeDecl) -> None:
        start_line = self.peek().line
        mods = self.parse_modifiers()
        tok = self.peek()
        if tok is None:
            raise JavaSyntaxError("unexpected end of input in type body", self._eof_line())
        if self._at_annotation_decl() or (tok.kind == "ident" and tok.text in TYPE_KEYWORDS):
            decl.nested.append(self.parse_type_decl(mods))
            return
        if tok.text == "{":  # instance or static initializer block
            self.skip_balanced("{", "}")
            return
        if tok.text == "<":  # generic method or constructor
            self.skip_balanced("<", ">")
        type_text = self.parse_type_ref()
        if self.at("("):  # constructor: the "type" was its name
            self.skip_balanced("(", ")")
            self._skip_throws()
            if not self.at("{"):
                tok = self.peek()
                raise JavaSyntaxError(
                    "constructor must have a body",
                    tok.line if tok else self._eof_line(),
                )
            self.skip_balanced("{", "}")
            return
        if not self.at_ident():
            tok = self.peek()
            raise JavaSyntaxError(
                f"expected member name but found {tok.text if tok else 'end of input'!r}",
                tok.line if tok else self._eof_line(),
            )
        name_tok = self.expect_ident()
        if self.at("("):
            method = self.parse_method_tail(name_tok.text, type_text, start_line, mods)
            decl.methods.append(method)
            return
        self._skip_field_declarators()

    def parse_type_ref(self) -> str:
        """A type: qualified name or primitive, generics, array suffixes."""
        parts: list[Token] = [self.expect_ident()]
        while True:
            if self.at("<"):
                opening, closing = self.skip_balanced("<", ">")
                parts.append(Token("punct", self.src[opening.start:closing.end],
                                   opening.line, opening.start, closing.end))
                continue
            if self.at(".") and self.peek(1) is not None and self.peek(1).kind == "ident":
                self.advance()
                dot_tok = self.expect_ident()
                parts.append(Token("ident", "." + dot_tok.text, dot_tok.line,
                                   dot_tok.start, dot_tok.end))
                continue
            if self.at("[") and self.peek(1) is not None and self.peek(1).text == "]":
                self.advance(); self.advance()
                parts.append(Token("punct", "[]", parts[-1].line, 0, 0))
                continue
            break
        return "".join(p.text for p in parts)

    def parse_method_tail(self, name: str, return_type: str, start_line: int,
                          mods: set[str]) -> MethodDecl:
        params = self.parse_parameters()
        while self.at("[") and self.peek(1) is not None and self.peek(1).text == "]":
            self.advance(); self.advance()
            return_type += "[]"
        self._skip_throws()
        if self.at("{"):
            opening, closing = self.skip_balanced("{", "}")
            body = self.src[opening.end:closing.start].strip()
        elif self.at(";"):
            self.advance()
            body = ""
        elif self.at("default"):  # annotation element default value
            self.advance()
            self._skip_to_semicolon()
            body = ""
        else:
            tok = self.peek()
            raise JavaSyntaxError(
                f"expected method body or ';' but found {tok.text if tok else 'end of input'!r}",
                tok.line if tok else self._eof_line(),
            )
        return MethodDecl(name=name, parameters=params, return_type=return_type,
                          body=body, line=start_line, modifiers=mods)

    def parse_parameters(self) -> list[tuple[str, str]]:
        self.expect("(")
        groups: list[list[Token]] = [[]]
        depth = 0  # (), [] nesting
        angle = 0  # generics nesting, tracked only at depth 0
        while True:
            tok = self.advance()
            if tok.text in "([":
                depth += 1
            elif tok.text in ")]":
                if tok.text == ")" and depth == 0:
                    break
                depth -= 1
            elif depth == 0:
                if tok.text == "<":
                    angle += 1
                elif tok.text == ">":
                    angle -= 1
                elif tok.text == "," and angle == 0:
                    groups.append([])
                    continue
            groups[-1].append(tok)
        params: list[tuple[str, str]] = []
        for group in groups:
            if not group:
                continue
            params.append(self._parse_parameter(group))
        return params

    def _parse_parameter(self, tokens: list[Token]) -> tuple[str, str]:
        # strip leading annotations and 'final'
        idx = 0
        while idx < len(tokens):
            tok = tokens[idx]
            if tok.text == "@":
                idx += 1
                while idx < len(tokens) and (tokens[idx].kind == "ident" or tokens[idx].text == "."):
                    idx += 1
                if idx < len(tokens) and tokens[idx].text == "(":
                    depth = 0
                    while idx < len(tokens):
                        if tokens[idx].text == "(":
                            depth += 1
                        elif tokens[idx].text == ")":
                            depth -= 1
                            if depth == 0:
                                idx += 1
                                break
                        idx += 1
                continue
            if tok.kind == "ident" and tok.text == "final":
                idx += 1
                continue
            break
        tokens = tokens[idx:]
        name_idx = None
        for i in range(len(tokens) - 1, -1, -1):
            if tokens[i].kind == "ident":
                name_idx = i
                break
        if name_idx is None or name_idx == 0:
            line = tokens[0].line if tokens else self._eof_line()
            raise JavaSyntaxError("malformed parameter declaration", line)
        type_tokens = tokens[:name_idx] + tokens[name_idx + 1:]  # trailing [] joins the type
        return (tokens[name_idx].text, _render_tokens(type_tokens))

    def _skip_throws(self) -> None:
        if not self.at("throws"):
            return
        self.advance()
        self.expect_ident()
        while True:
            if self.at(".") :
                self.advance()
                self.expect_ident()
                continue
            if self.at(","):
                self.advance()
                self.expect_ident()
                continue
            break

    def _skip_to_semicolon(self) -> None:
        """Skip an initializer/default expression; () [] {} groups are opaque."""
        depth = 0
        while True:
            tok = self.peek()
            if tok is None:
                raise JavaSyntaxError("expected ';'", self._eof_line())
            if depth == 0 and tok.text == ";":
                self.advance()
                return
            if depth == 0 and tok.text == "}":
                raise JavaSyntaxError("expected ';' before '}'", tok.line)
            if tok.text in "([{":
                depth += 1
            elif tok.text in ")]}":
                depth -= 1
                if depth < 0:
                    raise JavaSyntaxError(f"unbalanced {tok.text!r}", tok.line)
            self.advance()

    def _skip_field_declarators(self) -> None:
        self._skip_to_semicolon()


def _render_tokens(tokens: list[Token]) -> str:
    """Join type tokens compactly: space between adjacent words, after commas."""
    out: list[str] = []
    prev: Token | None = None
    for tok in tokens:
        text = tok.text
        if prev is not None:
            sep_words = prev.kind in ("ident", "number") and tok.kind in ("ident", "number")
            if sep_words or prev.text == ",":
                out.append(" ")
        out.append(text)
        prev = tok
    return "".join(out)


def parse_compilation_unit(src: str) -> CompilationUnit:
    """Parse source text; raises JavaSyntaxError when it is not a complete unit."""
    if not src.strip():
        raise JavaSyntaxError("empty compilation unit", 1)
    parser = _Parser(src, tokenize(src))
    return parser.parse_unit()
