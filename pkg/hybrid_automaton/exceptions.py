class HybridAutomatonError(Exception):
    pass


class InvalidArgumentError(HybridAutomatonError, ValueError):
    pass


class EmptyDatasetError(HybridAutomatonError):
    pass


class TrainingDivergedError(HybridAutomatonError):
    pass


class CellTrainingError(HybridAutomatonError):
    def __init__(self, cell: int, error: Exception):
        self.cell = cell
        self.error = error
        super().__init__(f"cell {cell}: {error}")

    def __reduce__(self):
        # process pools pickle exceptions through their constructor arguments
        return (self.__class__, (self.cell, self.error))


class FragmentOverflowError(HybridAutomatonError):
    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(
            f"exact-union produced {count} fragments (cap {cap}); use the per-cell-merge policy for long horizons"
        )

    def __reduce__(self):
        return (self.__class__, (self.count, self.cap))


class ReachStepError(HybridAutomatonError):
    def __init__(self, step: int, error: Exception):
        self.step = step
        self.error = error
        super().__init__(f"reach step {step}: {error}")

    def __reduce__(self):
        return (self.__class__, (self.step, self.error))


class ModelValidationError(HybridAutomatonError):
    pass


class TraceFormatError(HybridAutomatonError):
    pass
