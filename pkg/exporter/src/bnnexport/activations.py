"""Sign activation used by binarized models at inference time.

Training-time straight-through estimators differ only in the backward
pass, which is irrelevant for export; the forward semantics here match
the verifier's sign layer, including sign(0) = +1.
"""

import keras
from keras import ops


@keras.saving.register_keras_serializable(package="bnnexport")
def ste_sign(x):
    return ops.where(x >= 0, ops.ones_like(x), -ops.ones_like(x))
