"""
Utility functions of the :mod:`therapyeval` package.
"""

import hashlib
import io
import json
import os
import re
import tempfile

from bronx.fancies import loggers

#: No automatic export
__all__ = []

logger = loggers.getLogger(__name__)

_NAME_JUNK = re.compile(r'[\s_\-]+')
_BLANKS = re.compile(r'\s+')


class TherapyEvalError(Exception):
    """Root of all the exceptions raised by the :mod:`therapyeval` package."""
    pass


def normalize_name(name):
    """
    Reduce a dimension (or label) name to the key used for matching.

    Examples::

        >>> normalize_name('Obsessive-Compulsive')
        'obsessivecompulsive'
        >>> normalize_name('  interpersonal_sensitivity ')
        'interpersonalsensitivity'
        >>> normalize_name('Phobic  Anxiety') == normalize_name('phobic-anxiety')
        True

    """
    return _NAME_JUNK.sub('', str(name)).casefold()


def collapse_blanks(text):
    """
    Collapse any run of whitespace into a single space and strip the result.

    Examples::

        >>> collapse_blanks('  I feel\\t great   actually. ')
        'I feel great actually.'

    """
    return _BLANKS.sub(' ', text).strip()


def canonical_json(obj):
    """
    Serialise ``obj`` as compact JSON with sorted keys (stable across runs).

    Examples::

        >>> canonical_json({'b': 1, 'a': [1, 2]})
        '{"a":[1,2],"b":1}'
        >>> canonical_json({'txt': 'Client: 你好'})
        '{"txt":"Client: 你好"}'

    """
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(',', ':'))


def digest(obj):
    """
    Return the sha256 hex digest of the canonical JSON form of ``obj``.

    Examples::

        >>> digest({'a': 1}) == digest({'a': 1})
        True
        >>> len(digest([]))
        64

    """
    return hashlib.sha256(canonical_json(obj).encode('utf-8')).hexdigest()


def text_fingerprint(chunks):
    """
    Exact-text fingerprint of an ordered collection of strings.

    Whitespace runs are collapsed but case and punctuation are kept.

    Examples::

        >>> text_fingerprint(['a  b', 'c']) == text_fingerprint(['a b', 'c '])
        True
        >>> text_fingerprint(['a b', 'c']) == text_fingerprint(['A b', 'c'])
        False

    """
    sha = hashlib.sha1()
    for chunk in chunks:
        sha.update(collapse_blanks(chunk).encode('utf-8'))
        sha.update(b'\x1e')
    return sha.hexdigest()


def package_data(*names):
    """
    Path to a file shipped with the package (test definitions, templates, schemas).

    The ``THERAPYEVAL_DATA`` environment variable may point to an alternate
    directory, searched first.
    """
    altdir = os.environ.get('THERAPYEVAL_DATA')
    if altdir and os.path.exists(os.path.join(altdir, *names)):
        return os.path.join(altdir, *names)
    return os.path.join(os.path.dirname(os.path.abspath(__file__)), *names)


def read_jsonl(path):
    """
    Iterate over the records of a line-delimited JSON file.

    Yield ``(lineno, record)`` tuples; blank lines are skipped. A line that does
    not parse yields ``(lineno, exception)`` so that the caller decides whether
    to stop or to record the failure.
    """
    with io.open(path, encoding='utf-8') as fhjson:
        for lineno, line in enumerate(fhjson, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except ValueError as trouble:
                yield lineno, trouble


def dump_jsonl(path, records, append=False):
    """Write ``records`` (JSON-able objects) as one canonical line each."""
    with io.open(path, 'a' if append else 'w', encoding='utf-8', newline='\n') as fhjson:
        for record in records:
            fhjson.write(canonical_json(record) + '\n')


def atomic_write(path, text):
    """Write ``text`` in ``path`` through a temporary file and an atomic rename."""
    dirname = os.path.dirname(os.path.abspath(path))
    fd, tmpname = tempfile.mkstemp(dir=dirname, prefix='.tmp-')
    try:
        with io.open(fd, 'w', encoding='utf-8', newline='\n') as fhtmp:
            fhtmp.write(text)
        os.replace(tmpname, path)
    except BaseException:
        if os.path.exists(tmpname):
            os.remove(tmpname)
        raise
