from .layers import (
    BatchNorm2d,
    Conv2d,
    Parameter,
    ReLU,
    Sequential,
    TransposedConv2d,
    conv2d_backward,
    conv2d_forward,
    deconv2d_backward,
    deconv2d_forward,
    mse_loss,
    relu_backward,
    relu_forward,
)
from .adam import Adam, NonFiniteGradientError
from .gradcheck import max_rel_error, numerical_grad, numerical_grad_sample
