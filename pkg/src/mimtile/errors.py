"""Exception hierarchy shared by every pipeline stage."""


class MimtileError(Exception):
    """Base class for all errors raised by this package."""


class EmptyInput(MimtileError, ValueError):
    pass


class BudgetTooSmall(MimtileError, ValueError):
    def __init__(self, budget, n_images):
        self.budget = budget
        self.n_images = n_images
        super().__init__(
            f"budget M={budget} is smaller than the number of images ({n_images}); "
            "every image needs at least one sub-image"
        )


class InvalidImage(MimtileError, ValueError):
    pass


class InvalidCanvas(MimtileError, ValueError):
    pass


class ShapeError(MimtileError, ValueError):
    pass


class EmptyBlock(MimtileError, ValueError):
    pass


class PlanMismatch(MimtileError, ValueError):
    pass


class ManifestError(MimtileError, ValueError):
    pass


# datagen
class NotEnoughInstances(MimtileError, ValueError):
    pass


class BadArity(MimtileError, ValueError):
    pass


class BadIndex(MimtileError, IndexError):
    pass


class InvalidInstance(MimtileError, ValueError):
    pass


class TooSmall(MimtileError, ValueError):
    pass


class FilteredOut(MimtileError, ValueError):
    pass


class EmptyTable(MimtileError, ValueError):
    pass


# annotator
class TemplateError(MimtileError, KeyError):
    def __str__(self):
        # KeyError quotes its argument; keep messages readable
        return str(self.args[0]) if self.args else ""


class ImageError(MimtileError, ValueError):
    pass


class CredentialError(MimtileError, RuntimeError):
    pass


# metrics
class NoGold(MimtileError, ValueError):
    pass


class EmptyEval(MimtileError, ValueError):
    pass
