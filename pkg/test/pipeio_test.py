import time

import pytest
from timeout import timeout

from textmap import BatchPipe, PipeClosed, pipe_batches


class TestBatchPipe:

    race_timeout = 0.5

    class RecordedProducer:

        def __init__(self, count=5):
            self.count = count
            self.put_count = 0

        def __call__(self, pipe):
            for index in range(self.count):
                pipe.put(index)
                self.put_count += 1

    @pytest.fixture
    def producer(self):
        return self.RecordedProducer()

    @pytest.fixture
    def pipe(self, producer):
        return BatchPipe(producer, buffer_size=1)

    def test_context_manager(self, pipe):
        assert not pipe.closed

        with pipe as pipe1:
            assert pipe is pipe1
            assert not pipe.closed

        assert pipe.closed

    def test_lazy_start(self, pipe, producer):
        time.sleep(0.01)
        assert producer.put_count == 0

    # repeat to ensure race condition triggered
    @timeout(race_timeout)
    @pytest.mark.parametrize('trial', range(5))
    def test_iterate(self, pipe, producer, trial):
        assert list(pipe) == [0, 1, 2, 3, 4]
        assert producer.put_count == 5

    @timeout(race_timeout)
    def test_bounded(self, pipe, producer):
        assert next(pipe) == 0

        time.sleep(0.05)

        # one consumed, one buffered and one blocked in put
        assert producer.put_count <= 2

    @timeout(race_timeout)
    def test_close_stops_producer(self, pipe, producer):
        next(pipe)
        pipe.close()

        time.sleep(0.05)
        assert producer.put_count < producer.count

    def test_next_closed(self, pipe):
        pipe.close()

        with pytest.raises(PipeClosed):
            next(pipe)

    @timeout(race_timeout)
    def test_producer_error(self):
        def produce(pipe):
            pipe.put('batch')
            raise RuntimeError('bad batch')

        pipe = BatchPipe(produce, buffer_size=2)
        with pytest.raises(RuntimeError, match='bad batch'):
            list(pipe)

    @timeout(race_timeout)
    def test_pipe_batches(self):
        def produce(pipe, start, stop, step=1):
            for value in range(start, stop, step):
                pipe.put(value)

        with pipe_batches(produce, 2, 9, step=3, buffer_size=1) as batches:
            assert list(batches) == [2, 5, 8]

    @timeout(race_timeout)
    def test_slow_producer(self):
        # batches arrive slower than the consumer's timed waits
        def produce(pipe):
            for value in range(3):
                time.sleep(3 * BatchPipe.queue_wait_timeout)
                pipe.put(value)

        with pipe_batches(produce) as batches:
            assert list(batches) == [0, 1, 2]
