from .diagnostics import mcse, rhat, rhat_converged, rhat_table, split_rhat
from .draws import PosteriorDraws
from .probs import gpcm_probs, sdt_probs
from .sampler import TwoPhaseFit, fit, fit_two_phase
from .summaries import fairness_contrast, summarize_bias, summary_rows
