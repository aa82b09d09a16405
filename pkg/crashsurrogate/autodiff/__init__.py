from crashsurrogate.autodiff.tensor import Tensor, Parameter, no_grad, deterministic, set_deterministic, is_deterministic
