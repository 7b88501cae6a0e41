from src.crowdmask.model.meter import AverageMeter


def test_average_meter():
    loss = AverageMeter('loss')
    v1 = loss(2, 4)
    v2 = loss(2, 8)
    test_val = (2*4+2*8)/12
    assert v2 == test_val, f"{v2} != {test_val}"


def test_average_meter_tracks_max_and_points():
    timer = AverageMeter('time', fmt=':.2f')
    for v in (0.5, 2.0, 1.0):
        timer(v)
    assert timer.max == 2.0
    assert timer.data_points == [0.5, 2.0, 1.0]
    assert str(timer) == 'time 1.17 (max 2.00)'
    timer.reset()
    assert timer.count == 0 and timer.data_points == []
