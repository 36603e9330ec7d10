from atom.api import Callable, ContainerList, ForwardTyped, Property, Str

from .base import PipelineItem
from .port import Port, PortType


def import_pipeline_type():
    from .graph import Pipeline
    return Pipeline


class Stage(PipelineItem):
    """ A processing step: ``func(**inputs)`` returns one value per output port.

    With a single output port ``func`` may return the bare value; otherwise it
    returns a dict keyed by output port name.

    """

    id = Str()
    name = Str()

    pipeline = ForwardTyped(import_pipeline_type)

    inputs = ContainerList(Port)
    outputs = ContainerList(Port)

    func = Callable()

    input_dict = Property(lambda self: self._mk_input_dict(), cached=True)
    output_dict = Property(lambda self: self._mk_output_dict(), cached=True)

    def _default_id(self):
        return self.name

    def _adopt(self, ports, port_type):
        for index, port in enumerate(ports):
            port.stage = self
            port.port_type = port_type
            port.index = index

    def _observe_inputs(self, change):
        if change['type'] == 'container' and change['operation'] == 'remove':
            change['item'].stage = None
        self._adopt(self.inputs, PortType.INPUT)
        self.get_member('input_dict').reset(self)

    def _mk_input_dict(self):
        return {v.name: v for v in self.inputs}

    def _observe_outputs(self, change):
        if change['type'] == 'container' and change['operation'] == 'remove':
            change['item'].stage = None
        self._adopt(self.outputs, PortType.OUTPUT)
        self.get_member('output_dict').reset(self)

    def _mk_output_dict(self):
        return {v.name: v for v in self.outputs}

    def serialize(self, archive):
        archive['name'] = self.name
        archive['inputs'] = [p.name for p in self.inputs]
        archive['outputs'] = [p.name for p in self.outputs]
        return super(Stage, self).serialize(archive)

    def execute(self, **values):
        result = self.func(**values)
        if len(self.outputs) == 1 and not isinstance(result, dict):
            return {self.outputs[0].name: result}
        missing = [p.name for p in self.outputs if p.name not in (result or {})]
        if missing:
            raise KeyError("stage produced no value for %s" % ", ".join(missing))
        return result
