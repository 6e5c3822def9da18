"""Penn-Treebank style bracketed parse trees.

A tree is written ``(LABEL child ...)``; preterminals are ``(POS token)``.
The root may carry an empty label, as in ``( (S ...))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Optional

from .errors import MalformedTreeError

__all__ = ["ParseTree", "parse_bracketed_tree", "serialize_tree"]


@dataclass(frozen=True)
class ParseTree:
    label: str
    children: tuple[ParseTree, ...] = ()
    token: Optional[str] = None

    def __post_init__(self):
        if self.token is not None and self.children:
            raise ValueError("a leaf cannot have children")
        if self.token is None and not self.children:
            raise ValueError("an internal node needs at least one child")

    @property
    def is_leaf(self) -> bool:
        return self.token is not None

    def leaves(self) -> Iterator[ParseTree]:
        stack = [self]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                yield node
            else:
                stack.extend(reversed(node.children))

    def tokens(self) -> list[str]:
        return [leaf.token for leaf in self.leaves()]

    def find_path(self, accept: Callable[[str], bool]) -> Optional[list[ParseTree]]:
        """Return the root-to-leaf node path of the leftmost leaf whose token
        satisfies ``accept``, or None."""
        stack = [(self, [self])]
        while stack:
            node, path = stack.pop()
            if node.is_leaf:
                if accept(node.token):
                    return path
                continue
            for child in reversed(node.children):
                stack.append((child, path + [child]))
        return None

    def __str__(self):
        return serialize_tree(self)


def serialize_tree(tree: ParseTree) -> str:
    if tree.is_leaf:
        return f"({tree.label} {tree.token})"
    inner = " ".join(serialize_tree(c) for c in tree.children)
    return f"({tree.label} {inner})" if tree.label else f"({inner})"


_DELIMS = "() \t\r\n"


def parse_bracketed_tree(text: str) -> ParseTree:
    """Parse one bracketed tree. Errors report byte offsets into ``text``."""

    def byte_offset(i):
        return len(text[:i].encode("utf-8"))

    def fail(msg, i):
        raise MalformedTreeError(msg, byte_offset(i))

    n = len(text)
    i = 0

    def skip_ws(i):
        while i < n and text[i].isspace():
            i += 1
        return i

    def read_atom(i):
        j = i
        while j < n and text[j] not in _DELIMS:
            j += 1
        return text[i:j], j

    i = skip_ws(i)
    if i >= n:
        fail("empty input", i)
    if text[i] != "(":
        fail("expected '('", i)

    # each frame: [label, children list, open offset]
    stack: list[list] = []
    root = None
    while True:
        i = skip_ws(i)
        if i >= n:
            fail("unexpected end of input, unbalanced parentheses", i)
        ch = text[i]
        if ch == "(":
            start = i
            i = skip_ws(i + 1)
            if i >= n:
                fail("unexpected end of input, unbalanced parentheses", i)
            label = ""
            if text[i] not in "()":
                label, i = read_atom(i)
            i = skip_ws(i)
            if i >= n:
                fail("unexpected end of input, unbalanced parentheses", i)
            if text[i] == ")":
                fail("empty node", start)
            if text[i] != "(":
                token, i = read_atom(i)
                i = skip_ws(i)
                if i >= n:
                    fail("unexpected end of input, unbalanced parentheses", i)
                if text[i] != ")":
                    fail("a preterminal takes exactly one token", i)
                i += 1
                if not label:
                    fail("leaf without a label", start)
                node = ParseTree(label, token=token)
                if not stack:
                    root = node
                    break
                stack[-1][1].append(node)
                continue
            stack.append([label, [], start])
        elif ch == ")":
            if not stack:
                fail("unbalanced ')'", i)
            label, children, _ = stack.pop()
            i += 1
            node = ParseTree(label, tuple(children))
            if not stack:
                root = node
                break
            stack[-1][1].append(node)
        else:
            fail("bare token outside a preterminal", i)

    i = skip_ws(i)
    if i < n:
        fail("trailing characters after tree", i)
    return root
