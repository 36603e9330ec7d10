from .base import PipelineItem
from .link import Link
from .port import Port, PortType
from .stage import Stage
from .graph import Pipeline, execution_order, run
