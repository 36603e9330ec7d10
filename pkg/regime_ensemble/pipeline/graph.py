import logging

import networkx as nx
from atom.api import ContainerList, Property, Str

from regime_ensemble.errors import ConfigurationError, StageError

from .base import PipelineItem
from .link import Link
from .stage import Stage

log = logging.getLogger(__name__)


class Pipeline(PipelineItem):

    name = Str()

    stages = ContainerList(Stage)
    links = ContainerList(Link)

    stage_dict = Property(lambda self: self._mk_stage_dict(), cached=True)
    link_dict = Property(lambda self: self._mk_link_dict(), cached=True)

    def _observe_stages(self, change):
        if change['type'] == 'create':
            for n in change['value']:
                n.pipeline = self
        elif change['type'] == 'container':
            if change['operation'] == 'append':
                change['item'].pipeline = self
            elif change['operation'] == 'remove':
                change['item'].pipeline = None
        self.get_member("stage_dict").reset(self)

    def _mk_stage_dict(self):
        return {v.id: v for v in self.stages}

    def _observe_links(self, change):
        if change['type'] == 'create':
            for n in change['value']:
                n.pipeline = self
        elif change['type'] == 'container':
            if change['operation'] == 'append':
                change['item'].pipeline = self
            elif change['operation'] == 'remove':
                change['item'].pipeline = None
        self.get_member("link_dict").reset(self)

    def _mk_link_dict(self):
        return {v.id: v for v in self.links}

    def add_stage(self, stage):
        if stage not in self.stages:
            self.stages.append(stage)
        else:
            raise ValueError("Stage already contained in pipeline")
        return stage

    def delete_stage(self, stage):
        if stage in self.stages:
            for link in [l for l in self.links
                         if l.start_port in stage.outputs or l.end_port in stage.inputs]:
                self.delete_link(link)
            self.stages.remove(stage)
        else:
            raise KeyError("Stage not contained in pipeline")

    def add_link(self, link):
        if link not in self.links:
            self.links.append(link)
        else:
            raise ValueError("Link already contained in pipeline")
        return link

    def connect(self, start, end):
        """ Link ``'<stage>.<output>'`` to ``'<stage>.<input>'``. """
        start_stage, start_port = start.split('.', 1)
        end_stage, end_port = end.split('.', 1)
        return self.add_link(Link(start_port=self.stage_dict[start_stage].output_dict[start_port],
                                  end_port=self.stage_dict[end_stage].input_dict[end_port]))

    def delete_link(self, link):
        link.start_port = None
        link.end_port = None
        if link in self.links:
            self.links.remove(link)
        else:
            raise KeyError("Link not contained in pipeline")

    def serialize(self, archive):
        """ Plain description of the stages, their hyper-parameters and the links. """
        archive['name'] = self.name
        archive['stages'] = [s.serialize({}) for s in self.stages]
        archive['links'] = sorted(l.id for l in self.links)
        return super(Pipeline, self).serialize(archive)

    def to_networkx(self):
        graph = nx.DiGraph()
        graph.add_nodes_from(s.id for s in self.stages)
        for link in self.links:
            if not link.is_open:
                graph.add_edge(link.start_port.stage.id, link.end_port.stage.id)
        return graph


def execution_order(pipeline):
    graph = pipeline.to_networkx()
    try:
        order = list(nx.lexicographical_topological_sort(
            graph, key=lambda sid: pipeline.stages.index(pipeline.stage_dict[sid])))
    except nx.NetworkXUnfeasible:
        cycle = [u for u, _ in nx.find_cycle(graph)]
        raise ConfigurationError('pipeline', "stage graph has a cycle through %s" % " -> ".join(cycle))
    return [pipeline.stage_dict[sid] for sid in order]


def run(pipeline, **sources):
    """ Execute every stage in dependency order.

    Inputs without an incoming link are read from ``sources`` by port name.
    Returns every produced value keyed by ``'<stage>.<port>'``.

    """
    values = {}
    for stage in execution_order(pipeline):
        kwargs = {}
        for port in stage.inputs:
            incoming = [l for l in port.links if l.end_port is port and l.start_port is not None]
            if incoming:
                kwargs[port.name] = values[incoming[0].start_port.qualified_name]
            elif port.name in sources:
                kwargs[port.name] = sources[port.name]
            else:
                raise ConfigurationError(port.qualified_name, "no link and no source value")
        log.info("running stage '%s'", stage.name)
        try:
            produced = stage.execute(**kwargs)
        except Exception as e:
            raise StageError(stage.name, e) from e
        for name, value in produced.items():
            values['%s.%s' % (stage.name, name)] = value
    return values
