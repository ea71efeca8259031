from typing import NamedTuple


class DecoderWeights(NamedTuple):
    """Decoder parameter arrays in the order every backend expects."""
    prenet_w: list
    prenet_b: list
    arnn_wx: object
    arnn_wh: object
    arnn_bx: object
    arnn_bh: object
    wq: object
    v: object
    drnn_wx: object
    drnn_wh: object
    drnn_bx: object
    drnn_bh: object
    proj_w: object
    proj_b: object

    def flat(self):
        return [*self.prenet_w, *self.prenet_b, *self[2:]]

    @classmethod
    def from_flat(cls, items, n_prenet):
        items = list(items)
        return cls(items[:n_prenet], items[n_prenet:2 * n_prenet], *items[2 * n_prenet:])
