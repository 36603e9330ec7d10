import logging

import numpy as np
from atom.api import (Atom, Bool, Int, Float, Str, Enum, Tuple,
                      List, Dict, ContainerList, Typed, Instance)

from regime_ensemble.errors import FormatError

log = logging.getLogger(__name__)


def array_to_archive(value):
    value = np.asarray(value)
    return {'shape': list(value.shape),
            'dtype': value.dtype.str,
            'data': value.ravel().tolist()}


def array_from_archive(archive):
    try:
        return np.asarray(archive['data'], dtype=np.dtype(archive['dtype'])).reshape(archive['shape'])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError("malformed array record: %s" % e)


def _plain(value):
    # json-compatible copy; tuples become lists, numpy scalars become python scalars
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, np.generic):
        return value.item()
    return value


def _tuples(value):
    if isinstance(value, list):
        return tuple(_tuples(v) for v in value)
    return value


def serialize(archive, member, value):
    if isinstance(member, (Bool, Int, Str, Enum)):
        archive[member.name] = value
    elif isinstance(member, Float):
        archive[member.name] = float(value)
    elif isinstance(member, (List, ContainerList, Tuple)):
        archive[member.name] = _plain(value)
    elif isinstance(member, Dict):
        archive[member.name] = _plain(value)
    elif isinstance(member, (Typed, Instance)):
        if value is None:
            archive[member.name] = None
        elif isinstance(value, np.ndarray):
            archive[member.name] = array_to_archive(value)
        elif isinstance(value, Attributes):
            archive[member.name] = value.serialize({})
        else:
            log.warning("Cannot serialize Typed/Instance member: %s -> %s" % (member.name, type(value)))
    else:
        log.warning("Unknown member type: %s -> %s" % (member.name, type(member)))


def deserialize(archive, member, current=None):
    value = archive[member.name]
    if isinstance(member, (Bool, Int, Str, Enum)):
        return value
    elif isinstance(member, Float):
        return float(value)
    elif isinstance(member, Tuple):
        return _tuples(value)
    elif isinstance(member, (List, ContainerList)):
        return list(value)
    elif isinstance(member, Dict):
        return {k: _tuples(v) for k, v in value.items()}
    elif isinstance(member, (Typed, Instance)):
        if value is None:
            return None
        if isinstance(current, Attributes):
            current.deserialize(value)
            return current
        if isinstance(value, dict) and 'data' in value:
            return array_from_archive(value)
        log.warning("Cannot deserialize Typed/Instance member: %s -> %s" % (member.name, type(member)))
    else:
        log.warning("Unknown member type: %s -> %s" % (member.name, type(member)))
    return None


class Attributes(Atom):
    """ An atom object whose members round-trip through a plain dict archive.

    """

    def serialize(self, archive):
        for name, member in sorted(self.members().items()):
            if name.startswith('_'):
                continue
            serialize(archive, member, getattr(self, name))
        return archive

    def deserialize(self, archive):
        for name, member in self.members().items():
            if name in archive:
                setattr(self, name, deserialize(archive, member, getattr(self, name)))
        return self

    @classmethod
    def from_archive(cls, archive):
        return cls().deserialize(archive)

    def copy(self, **changes):
        other = type(self).from_archive(self.serialize({}))
        for name, value in changes.items():
            setattr(other, name, value)
        return other

    def validate(self):
        return self
