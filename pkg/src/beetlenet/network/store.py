from collections import OrderedDict

import numpy as np


class ParameterStore:
    """Ordered name -> array map holding every network weight.

    Names are dot-separated paths. Shapes are fixed once an entry exists;
    :meth:`assign` copies new values in place after a shape check. Each entry
    carries a ``trainable`` flag (frozen batch-norm statistics are not).
    """

    def __init__(self):
        self._arrays = OrderedDict()
        self._trainable = {}

    def add(self, name, array, trainable=True):
        if name in self._arrays:
            raise KeyError(f"duplicate parameter name {name!r}")
        self._arrays[name] = np.array(array)
        self._trainable[name] = bool(trainable)

    def __getitem__(self, name):
        return self._arrays[name]

    def __contains__(self, name):
        return name in self._arrays

    def __iter__(self):
        return iter(self._arrays)

    def __len__(self):
        return len(self._arrays)

    def names(self):
        return list(self._arrays)

    def items(self):
        return self._arrays.items()

    def trainable(self, name):
        return self._trainable[name]

    def trainable_names(self):
        return [n for n in self._arrays if self._trainable[n]]

    def shape(self, name):
        return self._arrays[name].shape

    def assign(self, name, value):
        value = np.asarray(value)
        if value.shape != self._arrays[name].shape:
            raise ValueError(f"shape mismatch for {name}: store has {self._arrays[name].shape}, got {value.shape}")
        self._arrays[name][...] = value

    def num_params(self, trainable_only=False):
        return sum(a.size for n, a in self._arrays.items() if self._trainable[n] or not trainable_only)

    def copy(self):
        out = ParameterStore()
        for n, a in self._arrays.items():
            out.add(n, a.copy(), self._trainable[n])
        return out

    def astype(self, dtype):
        out = ParameterStore()
        for n, a in self._arrays.items():
            out.add(n, a.astype(dtype), self._trainable[n])
        return out

    def equal(self, other):
        """Bitwise equality of names, order, flags, dtypes and values."""
        if self.names() != other.names():
            return False
        for n, a in self._arrays.items():
            b = other[n]
            if self._trainable[n] != other.trainable(n) or a.dtype != b.dtype or a.shape != b.shape:
                return False
            if a.tobytes() != b.tobytes():
                return False
        return True
