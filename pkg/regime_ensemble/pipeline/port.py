from enum import IntEnum

from atom.api import ContainerList, ForwardTyped, Int, Str, Typed

from .base import PipelineItem
from .link import Link


def import_stage_type():
    from .stage import Stage
    return Stage


class PortType(IntEnum):
    INPUT = 1
    OUTPUT = 2


class Port(PipelineItem):
    name = Str()
    index = Int()

    stage = ForwardTyped(import_stage_type)
    links = ContainerList(Link)

    #: maximum number of links, 0 for unlimited
    degree = Int(0)
    data_type = Str()
    port_type = Typed(PortType)

    @property
    def is_full(self):
        return self.degree > 0 and len(self.links) >= self.degree

    def attach(self, link):
        """ Append ``link`` unless the port is already at its degree. """
        if self.is_full:
            raise ValueError("Too many links - %s" % self.qualified_name)
        self.links.append(link)

    @property
    def qualified_name(self):
        stage = self.stage.name if self.stage is not None else '?'
        return '%s.%s' % (stage, self.name)

    def can_connect(self, link_or_port):
        return self.data_type == link_or_port.data_type and not self.is_full
