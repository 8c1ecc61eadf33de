from obsv.parallel import ordered_map, thread_cap


def test_thread_cap_from_environment(monkeypatch):
    monkeypatch.setenv("OBSV_THREADS", "3")
    assert thread_cap() == 3
    monkeypatch.setenv("OBSV_THREADS", "zero")
    assert thread_cap(default=2) == 2
    monkeypatch.setenv("OBSV_THREADS", "-4")
    assert thread_cap() == 1
    monkeypatch.delenv("OBSV_THREADS")
    assert thread_cap() == 1


def test_ordered_map_keeps_order():
    items = list(range(20))
    assert ordered_map(lambda x: x * x, items, threads=4) == [x * x for x in items]
    assert ordered_map(lambda x: x, [], threads=4) == []
