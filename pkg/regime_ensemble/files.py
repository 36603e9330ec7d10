""" Write-to-temp-then-rename helpers so readers never see half-written outputs. """
import logging
import os
import tempfile

log = logging.getLogger(__name__)


def atomic_write_text(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix='.tmp-', dir=directory)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='\n') as handle:
            handle.write(text)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    log.debug("wrote %s", path)
    return path


def atomic_write_frame(frame, path, float_format=None):
    return atomic_write_text(path, frame.to_csv(index=False, float_format=float_format, lineterminator='\n'))
