from app.autograd.tensor import Parameter, Tensor, concat, constant, no_grad

__all__ = ["Parameter", "Tensor", "concat", "constant", "no_grad"]
