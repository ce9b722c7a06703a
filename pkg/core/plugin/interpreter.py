"""
Sequence interpreter: executes a plugin's scripts against a live session.

The runner keeps a memory of every bound name (pipeline parameters plus the
captures of earlier steps) so later steps and later scripts can refer to them.
"""
import logging
from typing import Dict, Optional

from core.plugin.descriptor import (
    CanonicalOp,
    PluginDescriptor,
    PluginError,
    SequenceScript,
    SequenceStep,
    WILDCARD,
    whole_placeholder,
)
from core.wire import Message, Session, Timeout

logger = logging.getLogger(__name__)


class StepMismatch(PluginError):
    """The reply did not match the step's expectation: the sensor speaks another dialect."""

    def __init__(self, step_index: int, got: Message, reason: str, op: Optional[CanonicalOp] = None):
        where = f"{op.value} " if op else ""
        super().__init__(f"{where}step {step_index} mismatch ({reason}); got {got}")
        self.step_index = step_index
        self.got = got
        self.reason = reason
        self.op = op


class StepTimeout(PluginError):
    """No reply to a step after its retries were exhausted."""

    def __init__(self, step_index: int, op: Optional[CanonicalOp] = None):
        where = f"{op.value} " if op else ""
        super().__init__(f"{where}step {step_index} timed out")
        self.step_index = step_index
        self.op = op


def match_reply(step: SequenceStep, reply: Message, bound: Dict[str, str]) -> Dict[str, str]:
    """
    Check a reply against a step's expectation and return the new captures.

    Verb must match exactly; each expected arg is a literal, ``*``, or ``${name}``
    (equal to the bound value if ``name`` is bound, captured otherwise).

    Raises:
        ValueError: With the mismatch reason
    """
    if reply.verb != step.expect_verb:
        raise ValueError(f"expected verb {step.expect_verb}, got {reply.verb}")

    captures: Dict[str, str] = {}
    for key, pattern in step.expect_args:
        value = reply.get(key)
        if value is None:
            raise ValueError(f"missing arg {key!r}")
        if pattern == WILDCARD:
            continue
        name = whole_placeholder(pattern)
        if name is None:
            if value != pattern:
                raise ValueError(f"arg {key!r} is {value!r}, expected {pattern!r}")
        elif name in bound:
            if value != bound[name]:
                raise ValueError(f"arg {key!r} echoes {value!r}, expected {bound[name]!r}")
        else:
            captures[name] = value

    for key in step.capture:
        value = reply.get(key)
        if value is None:
            raise ValueError(f"missing captured arg {key!r}")
        captures[key] = value
    return captures


class SequenceRunner:
    """
    Runs scripts over one session, accumulating bound names across scripts.
    Holds exclusive use of the session while a script runs.
    """

    def __init__(self, session: Session, params: Optional[Dict[str, str]] = None):
        self.session = session
        self.memory: Dict[str, str] = dict(params or {})

    async def run(self, script: SequenceScript, op: Optional[CanonicalOp] = None,
                  params: Optional[Dict[str, str]] = None) -> Dict[str, str]:
        """
        Execute a script's steps in order.

        Args:
            script: The script to run
            op: Canonical operation the script implements (for diagnostics)
            params: Extra names to bind before running

        Returns:
            Captures produced by this script

        Raises:
            StepMismatch: A reply did not match
            StepTimeout: A step got no reply after its retries
            ConnectionClosed: The session ended
        """
        if params:
            self.memory.update(params)
        captures: Dict[str, str] = {}

        for index, step in enumerate(script.steps, start=1):
            try:
                outbound = step.render(self.memory)
            except KeyError as e:
                raise PluginError(f"step {index} references unbound {e.args[0]!r}")

            reply = None
            for attempt in range(step.retries + 1):
                try:
                    # the step owns retransmission; no second loop in the session
                    reply = await self.session.request(outbound, timeout=step.timeout_ms / 1000, retries=0)
                    break
                except Timeout:
                    logger.debug(f"Step {index} of {op.value if op else 'script'} timed out "
                                 f"(attempt {attempt + 1}/{step.retries + 1})")
            if reply is None:
                raise StepTimeout(index, op)

            try:
                new = match_reply(step, reply, self.memory)
            except ValueError as e:
                raise StepMismatch(index, reply, str(e), op)

            logger.trace(f"Step {index} of {op.value if op else 'script'} matched, captured {sorted(new)}")
            captures.update(new)
            self.memory.update(new)

        return captures

    async def run_op(self, descriptor: PluginDescriptor, op: CanonicalOp,
                     params: Optional[Dict[str, str]] = None) -> Dict[str, str]:
        return await self.run(descriptor.script(op), op, params)


async def run_sequence(session: Session, script: SequenceScript, params: Dict[str, str]) -> Dict[str, str]:
    """Run one script with the given parameters and return its captures."""
    return await SequenceRunner(session, params).run(script)
