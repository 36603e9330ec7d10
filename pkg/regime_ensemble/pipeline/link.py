import logging

from atom.api import ForwardInstance, Str

from .base import PipelineItem

log = logging.getLogger(__name__)


def import_port_type():
    from .port import Port
    return Port


def import_pipeline_type():
    from .graph import Pipeline
    return Pipeline


class Link(PipelineItem):
    """ Directed connection from an output port to an input port. """

    id = Str()
    pipeline = ForwardInstance(import_pipeline_type)
    start_port = ForwardInstance(import_port_type)
    end_port = ForwardInstance(import_port_type)

    def _default_id(self):
        if self.start_port is None or self.end_port is None:
            return ''
        return '%s->%s' % (self.start_port.qualified_name, self.end_port.qualified_name)

    def _observe_start_port(self, change):
        self._rewire(change, self.end_port, lambda new: (new.data_type, self.end_port.data_type))

    def _observe_end_port(self, change):
        self._rewire(change, self.start_port, lambda new: (self.start_port.data_type, new.data_type))

    def _rewire(self, change, other, pair):
        old, new = change.get('oldvalue', None), change['value']
        if old is not None and self in old.links:
            old.links.remove(self)
        if new is None:
            return
        try:
            if other is not None and new.data_type != other.data_type:
                raise TypeError("Incompatible type for connection - %s->%s" % pair(new))
            new.attach(self)
        except (TypeError, ValueError):
            # detach the other end as well
            if other is not None and self in other.links:
                other.links.remove(self)
            raise

    @property
    def data_type(self):
        return getattr(self.start_port, "data_type", getattr(self.end_port, "data_type", ""))

    @property
    def is_open(self):
        return self.end_port is None or self.start_port is None
