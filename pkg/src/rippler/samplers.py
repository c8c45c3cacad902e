"""Kernel dispatch by name.

Four latent-state samplers share the ChainResult interface:

* ``rippler``                grid-rebound update on the untilted dynamics
* ``rippler-data-informed``  grid-rebound update on emission-tilted dynamics
* ``iffbs``                  exact single-individual conditional refresh
* ``rjmcmc-sir``             event-time moves (SIR structure only)
"""

from .chmm import RipplerError
from .iffbs import run_iffbs
from .rippler import run_rippler
from .rjmcmc import run_rjmcmc

KERNEL_NAMES = ("rippler", "rippler-data-informed", "iffbs", "rjmcmc-sir")

RIPPLER_KERNELS = ("rippler", "rippler-data-informed")


def run_chain(kernel, model, y, iterations, rng, rng_tuner=None,
              latent_updates=1, kappa="adaptive", epsilon=0.05,
              kappa_max=10, target_rate=0.234, x0=None, store_latent=False,
              theta_updater=None, theta_rng=None, force_python=False):
    """Run the named kernel and return its ChainResult. `rng_tuner` is
    only consumed by the adaptive grid-rebound kernels."""
    if kernel not in KERNEL_NAMES:
        raise RipplerError(
            "unknown kernel %r; expected one of %s"
            % (kernel, ", ".join(KERNEL_NAMES)))
    common = dict(x0=x0, store_latent=store_latent, latent_updates=latent_updates,
                  theta_updater=theta_updater, theta_rng=theta_rng,
                  force_python=force_python)
    if kernel in RIPPLER_KERNELS:
        return run_rippler(
            model, y, iterations, rng, rng_tuner, kappa=kappa,
            epsilon=epsilon, kappa_max=kappa_max, target_rate=target_rate,
            data_informed=(kernel == "rippler-data-informed"), **common)
    if kernel == "iffbs":
        return run_iffbs(model, y, iterations, rng, **common)
    return run_rjmcmc(model, y, iterations, rng, **common)
