"""Debug script to see a preconditioned solve step by step."""

from dotenv import load_dotenv
load_dotenv()

import numpy as np

from src.coarse.cem import build_cem_aux, build_cem_basis
from src.coarse.pou import build_pou
from src.coarse.spectral import Selection
from src.coeff.field import generate
from src.fem.assembly import BoundaryCondition, assemble_load, assemble_stiffness
from src.grid.hierarchy import build_hierarchy, overlapping_decomposition
from src.precond.hybrid import hybrid_cem
from src.precond.oracle import dense_cond_oracle
from src.precond.pcg import pcg
from src.precond.schwarz import one_level


def debug_solve(n_fine: int = 16, n_coarse: int = 4, eta: float = 1e4, k: int = 2):
    """Build a small channel problem, then trace PCG with two preconditioners."""

    print("=" * 60)
    print(f"PROBLEM: n_fine={n_fine}, n_coarse={n_coarse}, channels, eta={eta:g}")
    print("=" * 60)

    g = build_hierarchy(n_fine, n_coarse)
    field = generate(g, "channels", eta=eta, seed=3)
    a = assemble_stiffness(g, field)
    b = assemble_load(g, 1.0, bc=BoundaryCondition.DIRICHLET)
    print(f"  free dofs: {a.dim}, nonzeros: {a.matrix.nnz}, contrast: {field.eta:g}")

    pou = build_pou(g)
    aux = build_cem_aux(g, field, pou, Selection(count=2))
    cem = build_cem_basis(g, field, aux, k)
    print("\n--- Coarse space ---")
    print(f"  auxiliary counts: {aux.counts}")
    print(f"  Lambda: {aux.min_excluded_eigenvalue:.4g}")
    print(f"  basis residuals (max): {cem.residuals.max():.2e}")

    preconditioners = {
        "one_level": one_level(g, field, overlapping_decomposition(g, 1), operator=a),
        "hybrid_cem": hybrid_cem(g, field, cem, k, pou=pou, operator=a),
    }
    for name, m in preconditioners.items():
        print(f"\n--- {name} ---")
        _, report = pcg(a, b, m, callback=lambda it, res: print(f"  iteration {it:3d}: residual {res:.3e}"))
        print(f"  converged: {report.converged} after {report.iterations} iterations")
        print(f"  Lanczos cond estimate: {report.cond_estimate:.4g}")
        if a.dim <= 400:
            print(f"  dense oracle cond:     {dense_cond_oracle(a, m):.4g}")

    print("\n" + "=" * 60)
    print("END OF SOLVE")
    print("=" * 60)


if __name__ == "__main__":
    np.set_printoptions(precision=3)
    debug_solve()
