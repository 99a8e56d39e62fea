from .base import Exchange, Oracle, RoleUsage, request_digest
from .live import LiveOracle
from .prompts import Message, build_prompt, render
from .replay import ReplayOracle
from .responses import DomainEdit, parse_response
from .roles import OracleRole
from .scripted import ScriptBook, ScriptedOracle, domain_answer
