"""Concurrency-limited execution of blocking numerics with a spectrum cache."""

from __future__ import annotations

import asyncio
import logging
from collections import OrderedDict
from typing import Any, Callable, Dict, Optional, TypeVar

from .settings import LabSettings
from .spectral import Spectrum
from .utils import generate_cache_key

logger = logging.getLogger(__name__)

T = TypeVar("T")


class ComputationRunner:
    """
    Runs eigendecompositions, quadratures and Monte Carlo ensembles in worker
    threads, at most ``max_concurrency`` at a time, and memoises spectra in a
    bounded LRU cache so that experiments sharing an operator decompose it once.
    """

    def __init__(self, settings: Optional[LabSettings] = None):
        self.settings = settings or LabSettings()
        self._semaphore = asyncio.Semaphore(self.settings.max_concurrency)
        self._cache: OrderedDict[str, Spectrum] = OrderedDict()
        self._cache_max_entries = self.settings.spectrum_cache_entries
        self._pending: Dict[str, asyncio.Future] = {}

    async def run_blocking(self, fn: Callable[..., T], *args: Any, **kwargs: Any) -> T:
        async with self._semaphore:
            return await asyncio.to_thread(fn, *args, **kwargs)

    def _get_cached(self, cache_key: str) -> Spectrum | None:
        spectrum = self._cache.get(cache_key)
        if spectrum is None:
            return None
        self._cache.move_to_end(cache_key)
        return spectrum

    def _set_cached(self, cache_key: str, spectrum: Spectrum) -> None:
        self._cache[cache_key] = spectrum
        self._cache.move_to_end(cache_key)
        while len(self._cache) > self._cache_max_entries:
            self._cache.popitem(last=False)

    async def spectrum(
        self, kind: str, params: Dict[str, Any], builder: Callable[[], Spectrum]
    ) -> Spectrum:
        """Cached spectrum for ``(kind, params)``; concurrent requests share one build."""
        cache_key = generate_cache_key(kind, params)
        cached = self._get_cached(cache_key)
        if cached is not None:
            logger.debug("Spectrum cache hit: %s", cache_key)
            return cached
        pending = self._pending.get(cache_key)
        if pending is not None:
            return await pending

        future: asyncio.Future = asyncio.get_running_loop().create_future()
        self._pending[cache_key] = future
        try:
            spectrum = await self.run_blocking(builder)
        except BaseException as exc:
            future.set_exception(exc)
            future.exception()  # retrieved; waiters re-raise it
            raise
        finally:
            self._pending.pop(cache_key, None)
        future.set_result(spectrum)
        self._set_cached(cache_key, spectrum)
        logger.info("Cached spectrum %s (dim=%d)", kind, spectrum.dim)
        return spectrum

    def clear_cache(self) -> None:
        self._cache.clear()

    @property
    def cache_size(self) -> int:
        return len(self._cache)
