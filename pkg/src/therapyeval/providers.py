"""
Chat-completion providers.

Providers are footprint classes collected under the ``provider`` tag, so that
a run configuration only needs a description to get one::

    provider = footprints.proxy.provider(kind='openai', model='gpt-4o')

Every provider shares the same machinery (see :class:`Provider`):

  * a bounded number of in-flight requests (``concurrency`` attribute);
  * retries of transport-level failures only, with an exponential backoff
    (``attempts``, ``wait_min`` and ``wait_max`` attributes).

Concrete providers only implement :meth:`Provider._complete`.
"""

import io
import json
import os
import threading
import time

import footprints
import tenacity

from bronx.fancies import loggers

from .gateway import (ProviderError, ProviderResponse, ProviderTimeout, RateLimitError,
                      ScriptMissError, TransportError, request_digest)
from .util import dump_jsonl, read_jsonl

#: No automatic export
__all__ = []

logger = loggers.getLogger(__name__)


class Provider(footprints.FootprintBase):
    """Abstract chat-completion provider."""

    _abstract = True
    _collector = ('provider',)
    _footprint = dict(
        info='Abstract chat-completion provider',
        attr=dict(
            model=dict(
                info='The model identifier sent to the provider',
                optional=True,
                default='scripted',
            ),
            attempts=dict(
                info='Total number of attempts for a transport-level failure',
                type=int,
                optional=True,
                default=3,
            ),
            concurrency=dict(
                info='Maximum number of simultaneous requests',
                type=int,
                optional=True,
                default=4,
            ),
            timeout=dict(
                info='Timeout of one request (in seconds)',
                type=float,
                optional=True,
                default=120.,
            ),
            wait_min=dict(
                info='Minimal wait before a retry (in seconds)',
                type=float,
                optional=True,
                default=1.,
            ),
            wait_max=dict(
                info='Maximal wait before a retry (in seconds)',
                type=float,
                optional=True,
                default=30.,
            ),
        )
    )

    #: Whether the latency of a call is measured
    _timed = True

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self._slots = threading.BoundedSemaphore(max(1, self.concurrency))

    @property
    def realkind(self):
        return 'provider'

    def describe(self):
        """Short description of the provider (for logs and artifacts)."""
        return '{:s}:{:s}'.format(self.kind, self.model)

    def _log_retry(self, state):
        logger.warning('%s: attempt %d failed (%s), retrying',
                       self.describe(), state.attempt_number, state.outcome.exception())

    def _limited_call(self, request):
        with self._slots:
            t0 = time.perf_counter()
            raw_text, usage = self._complete(request)
            latency = time.perf_counter() - t0 if self._timed else 0.
        return ProviderResponse(raw_text=raw_text or '', usage=usage, latency=latency)

    def complete(self, request):
        """Send ``request``; transport errors are retried up to ``attempts`` attempts in total."""
        retrying = tenacity.Retrying(
            retry=tenacity.retry_if_exception_type(TransportError),
            stop=tenacity.stop_after_attempt(max(1, self.attempts)),
            wait=tenacity.wait_exponential(multiplier=max(self.wait_min, 0.), min=self.wait_min,
                                           max=self.wait_max),
            before_sleep=self._log_retry,
            reraise=True,
        )
        return retrying(self._limited_call, request)

    def _complete(self, request):
        """Return the raw text and the usage statistics (or ``None``)."""
        raise NotImplementedError()


class ScriptedProvider(Provider):
    """
    Canned responses, without any network access.

    A response is found either by the digest of the request (``script``) or,
    failing that, by the first rule whose needles all appear in the request's
    text (``rules``: a sequence of ``(needles, response)`` pairs). The same
    material may be read from a JSON file (``source``) with ``script`` and
    ``rules`` entries.
    """

    _footprint = dict(
        info='Replay canned responses',
        attr=dict(
            kind=dict(
                values=['scripted'],
            ),
            script=dict(
                info='Map of request digests to responses',
                type=footprints.FPDict,
                optional=True,
                default=footprints.FPDict(),
            ),
            rules=dict(
                info='Sequence of (needles, response) pairs',
                type=footprints.FPTuple,
                optional=True,
                default=footprints.FPTuple(),
            ),
            source=dict(
                info='A JSON file with script and rules entries',
                optional=True,
                default=None,
            ),
        )
    )

    _timed = False

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self._script = dict(self.script)
        self._rules = [(_as_needles(needles), text) for needles, text in self.rules]
        if self.source:
            with io.open(self.source, encoding='utf-8') as fhsrc:
                material = json.load(fhsrc)
            self._script.update(material.get('script', dict()))
            self._rules.extend((_as_needles(needles), text) for needles, text in material.get('rules', ()))
        self.calls = 0
        self._lock = threading.Lock()

    def _complete(self, request):
        with self._lock:
            self.calls += 1
        rdigest = request_digest(request)
        if rdigest in self._script:
            return self._script[rdigest], None
        text = request.text
        for needles, response in self._rules:
            if all(n in text for n in needles):
                return response, None
        raise ScriptMissError('No scripted response for request {:s}'.format(rdigest[:12]))


def _as_needles(needles):
    if isinstance(needles, str):
        return (needles, )
    return tuple(needles)


def scripted(script=None, rules=(), **kw):
    """Shortcut to a scripted provider (``rules`` may hold lists)."""
    return footprints.proxy.provider(
        kind='scripted',
        script=footprints.FPDict(script or dict()),
        rules=footprints.FPTuple((_as_needles(n), t) for n, t in rules),
        **kw
    )


class CassetteProvider(Provider):
    """
    Replay recorded responses from a JSONL cassette of ``{digest, raw}``
    records. In ``record`` mode, requests missing from the cassette are sent
    to the ``upstream`` provider and appended to the cassette.
    """

    _footprint = dict(
        info='Replay (or record) a cassette of responses',
        attr=dict(
            kind=dict(
                values=['cassette'],
            ),
            path=dict(
                info='The cassette file',
            ),
            mode=dict(
                optional=True,
                default='replay',
                values=['replay', 'record'],
            ),
            upstream=dict(
                info='The provider used when recording',
                type=Provider,
                optional=True,
                default=None,
            ),
            attempts=dict(
                default=1,
            ),
        )
    )

    _timed = False

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self._tape = dict()
        self._lock = threading.Lock()
        if os.path.exists(self.path):
            for lineno, record in read_jsonl(self.path):
                if isinstance(record, Exception):
                    logger.warning('Cassette %s, line %d: %s', self.path, lineno, record)
                    continue
                self._tape[record['digest']] = record['raw']
        elif self.mode == 'replay':
            raise ProviderError('Missing cassette: {:s}'.format(self.path))
        if self.mode == 'record' and self.upstream is None:
            raise ProviderError('Recording a cassette needs an upstream provider')
        logger.debug('Cassette %s: %d responses', self.path, len(self._tape))

    def describe(self):
        if self.upstream is not None:
            return self.upstream.describe()
        return super().describe()

    def _complete(self, request):
        rdigest = request_digest(request)
        with self._lock:
            if rdigest in self._tape:
                return self._tape[rdigest], None
        if self.mode != 'record':
            raise ScriptMissError('Request {:s} is not in cassette {:s}'.format(rdigest[:12], self.path))
        response = self.upstream.complete(request)
        with self._lock:
            self._tape[rdigest] = response.raw_text
            dump_jsonl(self.path, [dict(digest=rdigest, raw=response.raw_text)], append=True)
        return response.raw_text, response.usage


class OpenAICompatibleProvider(Provider):
    """
    Any chat-completion API following the OpenAI wire format.

    The API key is read in the ``<VENDOR>_API_KEY`` environment variable and
    the endpoint may be changed with ``<VENDOR>_BASE_URL`` (or the ``base_url``
    attribute).
    """

    _abstract = True
    _footprint = dict(
        info='OpenAI-like chat-completion API',
        attr=dict(
            base_url=dict(
                optional=True,
                default=None,
            ),
        )
    )

    #: Prefix of the environment variables
    _vendor = 'OPENAI'

    #: Endpoint when nothing else is specified
    _default_base_url = None

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self._client = None
        self._client_lock = threading.Lock()

    @property
    def client(self):
        """The SDK client (created on first use)."""
        with self._client_lock:
            if self._client is None:
                import openai
                api_key = os.environ.get(self._vendor + '_API_KEY')
                if not api_key:
                    raise ProviderError('The {:s}_API_KEY environment variable is not set'
                                        .format(self._vendor))
                base_url = (self.base_url or os.environ.get(self._vendor + '_BASE_URL') or
                            self._default_base_url)
                self._client = openai.OpenAI(api_key=api_key, base_url=base_url,
                                             timeout=self.timeout, max_retries=0)
                logger.debug('%s client created (endpoint: %s)', self.describe(), base_url or 'default')
        return self._client

    def _complete(self, request):
        import openai
        try:
            response = self.client.chat.completions.create(
                model=request.model or self.model,
                messages=[dict(m) for m in request.messages],
                temperature=request.temperature,
                max_tokens=request.max_output_tokens,
            )
        except openai.RateLimitError as trouble:
            raise RateLimitError(str(trouble))
        except openai.APITimeoutError as trouble:
            raise ProviderTimeout(str(trouble))
        except (openai.APIConnectionError, openai.InternalServerError) as trouble:
            raise TransportError(str(trouble))
        except openai.OpenAIError as trouble:
            raise ProviderError(str(trouble))
        usage = None
        if getattr(response, 'usage', None) is not None:
            usage = dict(prompt_tokens=response.usage.prompt_tokens,
                         completion_tokens=response.usage.completion_tokens)
        if not response.choices:
            return '', usage
        return response.choices[0].message.content or '', usage


class OpenAIProvider(OpenAICompatibleProvider):
    """The OpenAI hosted models."""

    _footprint = dict(
        info='OpenAI chat-completion API',
        attr=dict(
            kind=dict(
                values=['openai'],
            ),
            model=dict(
                default='gpt-4o',
            ),
        )
    )

    _vendor = 'OPENAI'


class DeepSeekProvider(OpenAICompatibleProvider):
    """The DeepSeek hosted models."""

    _footprint = dict(
        info='DeepSeek chat-completion API',
        attr=dict(
            kind=dict(
                values=['deepseek'],
            ),
            model=dict(
                default='deepseek-chat',
            ),
        )
    )

    _vendor = 'DEEPSEEK'
    _default_base_url = 'https://api.deepseek.com'


def get_provider(description):
    """Resolve a provider description (a mapping with at least a ``kind``)."""
    description = dict(description)
    if 'script' in description:
        description['script'] = footprints.FPDict(description['script'])
    if 'rules' in description:
        description['rules'] = footprints.FPTuple((_as_needles(n), t) for n, t in description['rules'])
    if isinstance(description.get('upstream'), dict):
        description['upstream'] = get_provider(description['upstream'])
    provider = footprints.proxy.provider(**description)
    if provider is None:
        raise ProviderError('No provider matches the description {!r}'.format(
            {k: v for k, v in description.items() if k in ('kind', 'model', 'path')}))
    logger.info('Using provider %s', provider.describe())
    return provider
