"""
pipeio
------

Assemble training batches concurrently with their consumption.

``BatchPipe`` runs a producer function in a writer thread, which
``put``\\ s items into a bounded queue; the consumer iterates the pipe.
The producer is blocked whenever the queue is full, so at most
``buffer_size`` items are held in memory ahead of the consumer.

"""
import logging
import queue
import threading

from .baseio import PipeClosed


LOG = logging.getLogger(__name__)


class BatchPipe:
    r"""Iteratively stream items produced by the given function.

    The producer's first, anonymous argument is the pipe itself, to
    which it ``put``\ s items::

        >>> def produce(pipe, count):
        ...     for index in range(count):
        ...         pipe.put(index)

        >>> with BatchPipe(produce, args=(3,), buffer_size=1) as pipe:
        ...     list(pipe)
        [0, 1, 2]

    The producer is started upon first iteration. An exception raised by
    the producer is re-raised to the consumer. Closing the pipe stops the
    producer at its next ``put``.

    """
    _none = object()

    buffer_size = 4
    queue_wait_timeout = 0.01

    thread_daemon = True

    def __init__(self, producer_func, args=None, kwargs=None, buffer_size=None):
        self.__producer_func__ = producer_func
        self.__producer_args__ = args
        self.__producer_kwargs__ = kwargs

        self.buffer_size = buffer_size or self.buffer_size
        self._buffer_queue = queue.Queue(self.buffer_size)

        self._producer = threading.Thread(
            daemon=self.thread_daemon,
            target=self._producer_run,
        )
        self._producer_started = False
        self._producer_exc = None
        self.closed = False

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        self.close()

    def __iter__(self):
        return self

    @property
    def _should_wait(self):
        return not self._producer_started or self._producer.is_alive()

    def _ensure_started(self):
        if not self._producer_started:
            self._producer.start()
            self._producer_started = True
            LOG.debug('[producer] started')

    def __next__(self):
        if self.closed:
            raise PipeClosed()

        self._ensure_started()

        # the producer may exit during a timed wait: the queue is drained
        # once more without blocking before the batches are declared done
        while True:
            producing = self._should_wait
            try:
                item = self._buffer_queue.get(producing, self.queue_wait_timeout)
                break
            except queue.Empty:
                if not producing:
                    item = self._none
                    break

        if self._producer_exc:
            raise self._producer_exc

        if item is self._none:
            raise StopIteration

        self._buffer_queue.task_done()
        return item

    def _producer_run(self):
        args = self.__producer_args__ or ()
        kwargs = self.__producer_kwargs__ or {}
        try:
            self.__producer_func__(self, *args, **kwargs)
        except PipeClosed:
            LOG.debug('[producer] killed')
        except Exception as exc:
            LOG.debug('[producer] error: %r', exc)
            self._producer_exc = exc
        else:
            LOG.debug('[producer] done')

    def put(self, item):
        while True:
            if self.closed:
                raise PipeClosed()

            try:
                self._buffer_queue.put(item, timeout=self.queue_wait_timeout)
            except queue.Full:
                continue
            else:
                return

    def close(self):
        self.closed = True

        # drain queue / release producer (which then finds pipe closed)
        while True:
            try:
                self._buffer_queue.get_nowait()
            except queue.Empty:
                break


def pipe_batches(producer_func, *args, buffer_size=None, **kwargs):
    return BatchPipe(
        producer_func,
        args=args,
        kwargs=kwargs,
        buffer_size=buffer_size,
    )


pipe_batches.__doc__ = BatchPipe.__doc__
