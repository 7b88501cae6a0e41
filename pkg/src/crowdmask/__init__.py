__version__ = '0.1.1'

from . import errors, geometry, field, model, segmenter, preprocess, eval, io, view


def about():
    print("crowdmask: point-supervised crowd instance masks")
