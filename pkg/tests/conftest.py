import numpy as np

from gronwall.bounds import ProblemInstance
from gronwall.expr import parse
from gronwall.grid import Grid, GridFunction, sample
from gronwall.kernels import Kernel, KernelSet


def gfn(g, source):
    """Sample a t-expression string on a grid."""
    return sample(parse(source, {"t"}), g)


def make_instance(
    theorem,
    p,
    alpha,
    beta,
    m,
    a=None,
    a_expr=None,
    b_expr=None,
    sigma_expr=None,
    k=None,
    h=None,
    ks=None,
):
    """Build a ProblemInstance from expression strings / Kernel objects."""
    g = Grid(alpha, beta, m)
    kernels = None
    if ks is not None:
        built = [
            kern if isinstance(kern, Kernel) else Kernel(i + 1, kern)
            for i, kern in enumerate(ks)
        ]
        kernels = KernelSet.iterated(built)
    elif k is not None or h is not None:
        kk = Kernel(1, k) if isinstance(k, str) else k
        hh = Kernel(2, h) if isinstance(h, str) else h
        kernels = KernelSet.pair(kk, hh)
    return ProblemInstance(
        theorem,
        p,
        g,
        a_const=a,
        a_fn=gfn(g, a_expr) if a_expr is not None else None,
        b=gfn(g, b_expr) if b_expr is not None else None,
        sigma=gfn(g, sigma_expr) if sigma_expr is not None else None,
        kernels=kernels,
    )
