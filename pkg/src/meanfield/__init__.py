"""Learning mean-field drifts of interacting particle systems with
measure-valued neural networks."""

from .dynamics import (AttractionRepulsionKernel, CompactBumpKernel, GaussianKernel,
                       ParticleState, SystemSpec, Trajectory, cucker_smale_accel, eval_kernel,
                       motsch_tadmor_drift, multigroup_drift, pairwise_drift, simulate, step)
from .data import InitSpec, build_dataset, finite_difference_targets, minibatch_iter, sample_initial
from .evaluation import (chaos_diagnostic, gaussian_kde, l2_density_error, sliced_wasserstein,
                         wasserstein_1d)
from .mvnn import (MgMvnnModel, MvnnModel, embed_mean, mg_mvnn_loss_grad, mvnn_drift,
                   mvnn_drift_all, mvnn_loss_grad, mvnn_rollout, second_order_drift)
from .nn import AdamState, MlpParams, adam_step, finite_diff_grad, mlp_backward, mlp_forward, mlp_init
from .training import OptimConfig, train

__version__ = "0.1.0"
