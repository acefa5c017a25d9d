"""Choose K and C by cross-validated document-completion perplexity.

A small grid keeps the run to a few minutes; widen ``K_GRID`` and ``C_GRID``
(and pass ``workers``) for real data.
"""

from ltnlda import ChainConfig, cv_grid, two_stage_selection
from ltnlda.evaluation import grid_curves
from ltnlda.simulate import generate_ltn_corpus, reduced_setup

K_GRID = [2, 3, 4]
C_GRID = [2, 3, 5]

tree, hyper, D, N_d = reduced_setup()
corpus, _ = generate_ltn_corpus(tree, hyper, D, N_d, seed=2)

fit = ChainConfig(iterations=1500, burn_in=750, thin=5)
score = ChainConfig(iterations=100, burn_in=50, thin=1)
rows = cv_grid(corpus, tree, K_GRID, C_GRID, folds=4, fit_config=fit, score_config=score,
               seed=7)

print(" K  C  perplexity  SE")
for cell in grid_curves(rows):
    print(f"{cell['K']:2d} {cell['C']:2d}  {cell['perplexity']:10.4f}  {cell['se']:.4f}")

# with only three K values the per-K knees in C can all differ; the tie then
# goes to the smallest C, so expect the choice to wobble on grids this small
choice = two_stage_selection(rows)
print(f"selected K = {choice['K']}, C = {choice['C']} (truth K = {hyper.K}, C = {hyper.C})")
