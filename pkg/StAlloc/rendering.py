import numpy as np

from StAlloc.allocation import Allocation, UNCLAIMED

WHITE = (255, 255, 255)
BLACK = (0, 0, 0)
CLAIMED = (70, 70, 70)
HIGHLIGHT = (200, 30, 30)


def center_colors(n):
    """Territory colors from a multiplicative hash of the center index (never white)"""
    h = (np.arange(n, dtype=np.uint64) * np.uint64(2654435761)) & np.uint64(0xFFFFFFFF)
    rgb = np.stack([(h >> np.uint64(s)) & np.uint64(0x7F) for s in (0, 8, 16)], axis=-1)

    return (rgb + np.uint64(100)).astype(np.uint8)


def _check_2d(shape):
    if len(shape) != 2:
        raise ValueError('rendering is 2D only, got a {}D grid'.format(len(shape)))


def _to_image(rgb, scale):
    # (nx, ny, 3) cell colors -> (rows, cols, 3) pixels with y pointing up
    rgb = np.repeat(np.repeat(rgb, scale, axis=0), scale, axis=1)

    return np.ascontiguousarray(np.transpose(rgb, (1, 0, 2))[::-1])


def _cell_borders(flags, scale):
    pattern = np.zeros((scale, scale), dtype=bool)
    if scale < 3:
        pattern[:] = True
    else:
        pattern[[0, -1], :] = True
        pattern[:, [0, -1]] = True
    border = np.kron(flags, pattern).astype(bool)

    return np.transpose(border)[::-1]


def _draw_dots(img, grid, coords, scale):
    rows, cols = img.shape[:2]
    r = max(1, scale // 2)
    for x, y in coords:
        col = int(np.floor(x / grid.h * scale))
        row = rows - 1 - int(np.floor(y / grid.h * scale))
        img[max(row - r, 0):row + r + 1, max(col - r, 0):col + r + 1] = BLACK


def allocation_image(alloc, scale=1, dots=True):
    """RGB pixels of an allocation: territories by center, unclaimed white, disputed cells outlined"""
    _check_2d(alloc.grid.shape)

    owner = alloc.owner
    rgb = np.empty(owner.shape + (3,), dtype=np.uint8)
    rgb[:] = WHITE
    claimed = owner != UNCLAIMED
    rgb[claimed] = center_colors(alloc.n_centers)[owner[claimed]]

    img = _to_image(rgb, scale)
    img[_cell_borders(alloc.disputed, scale)] = BLACK
    if dots:
        _draw_dots(img, alloc.grid, alloc.centers.coords, scale)

    return img


def mask_image(mask, scale=1, highlight=None, centers=None, grid=None):
    """RGB pixels of a boolean mask (claimed dark, rest white); highlight marks cells in red"""
    mask = np.asarray(getattr(mask, 'mask', mask), dtype=bool)
    _check_2d(mask.shape)

    rgb = np.empty(mask.shape + (3,), dtype=np.uint8)
    rgb[:] = WHITE
    rgb[mask] = CLAIMED
    if highlight is not None:
        rgb[np.asarray(highlight, dtype=bool)] = HIGHLIGHT

    img = _to_image(rgb, scale)
    if centers is not None and grid is not None:
        _draw_dots(img, grid, centers.coords, scale)

    return img


def panel(images, gap=4):
    """Side-by-side composition of equally tall images separated by white columns"""
    height = images[0].shape[0]
    if any(img.shape[0] != height for img in images):
        raise ValueError('panel images must have equal heights')

    sep = np.full((height, gap, 3), 255, dtype=np.uint8)
    parts = []
    for k, img in enumerate(images):
        if k > 0:
            parts.append(sep)
        parts.append(img)

    return np.concatenate(parts, axis=1)


def write_ppm(img, path):
    """Write an (rows, cols, 3) uint8 image as binary portable pixmap"""
    img = np.asarray(img, dtype=np.uint8)
    rows, cols = img.shape[:2]
    with open(path, 'wb') as fout:
        fout.write(b'P6\n%d %d\n255\n' % (cols, rows))
        fout.write(img.tobytes())


def read_ppm(path):
    with open(path, 'rb') as fin:
        magic = fin.readline().strip()
        if magic != b'P6':
            raise ValueError('not a binary portable pixmap: {}'.format(path))
        cols, rows = (int(x) for x in fin.readline().split())
        fin.readline()
        data = fin.read(rows * cols * 3)

    return np.frombuffer(data, dtype=np.uint8).reshape(rows, cols, 3)


def render(item, path, scale=1, dots=True, highlight=None):
    """Render an Allocation, a list of Allocations (one panel each) or a mask to a PPM file"""
    if isinstance(item, Allocation):
        img = allocation_image(item, scale, dots)
    elif isinstance(item, (list, tuple)):
        img = panel([allocation_image(a, scale, dots) for a in item])
    else:
        img = mask_image(item, scale, highlight)
    write_ppm(img, path)

    return img
