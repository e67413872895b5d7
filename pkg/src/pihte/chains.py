"""Builders for the confounded-chain benchmark family.

The chain over V0..V{n-1} has directed edges Vi -> Vi+1 and bidirected edges
between consecutive even-indexed variables. Its interventional estimand
P(V{n-1} | do(V0)) is a product of conditionals for the odd variables times a
sum over V0 of the even-variable conditionals; the renamer turns the bound V0
into V0'.
"""

from __future__ import annotations


def make_chain_graph(n: int, k: int = 4) -> str:
    """Graph text for the n-variable confounded chain with domain size k."""
    if n < 3 or n % 2 == 0:
        raise ValueError("chain length must be odd and >= 3")
    lines = [f"var V{i} {k}" for i in range(n)]
    lines += [f"V{i} -> V{i + 1}" for i in range(n - 1)]
    lines += [f"V{i} <-> V{i + 2}" for i in range(0, n - 2, 2)]
    return "\n".join(lines) + "\n"


def make_chain_estimand(n: int) -> str:
    """Estimand text for P(V{n-1} | do(V0)) on the n-variable chain."""
    if n < 3 or n % 2 == 0:
        raise ValueError("chain length must be odd and >= 3")

    def term(i):
        parents = ",".join(f"V{j}" for j in range(i))
        return f"P(V{i}|{parents})"

    odd = [term(i) for i in range(1, n, 2)]
    even = [term(i) for i in range(2, n, 2)]
    inner_bound = ",".join(f"V{j}" for j in range(1, n - 1))
    outer = " ".join(odd)
    inner = " ".join(even + ["P(V0)"])
    return f"sum[{inner_bound}]({outer} sum[V0]({inner}))\n"
