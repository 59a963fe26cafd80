"""Expected amortised cost analysis for a probabilistic first-order language.

The package is organised along the pipeline:

    lang       -- syntax, parser, printer, simple type checker
    semantics  -- small-step (multidistribution) and big-step evaluators,
                  Monte-Carlo estimation
    potential  -- resource functions rk / p_(a,b), annotations and their
                  arithmetic, potential of concrete values
    weakening  -- fact base about log/rk and the Farkas-style symbolic
                  comparison used by the structural weakening rule
    derive     -- annotated-type constraint generation (tick now/defer,
                  costed and cost-free derivations)
    constraints, smtlib, lra, solver
               -- linear constraint IR, SMT-LIB emission, the bundled
                  exact-rational LP engine and solver orchestration
    cli        -- infer | check | run | emit | matrix subcommands
"""

__version__ = "0.1.0"
