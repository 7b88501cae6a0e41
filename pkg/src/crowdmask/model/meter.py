## Adapted from the pytorch imagenet example
## https://github.com/pytorch/examples/blob/master/imagenet/main.py


class AverageMeter(object):
    """Computes and stores the average, maximum and current value"""

    def __init__(self, name, fmt=':.4f'):
        self.name = name
        self.fmt = fmt
        self.reset()

    def reset(self):
        self.val = 0
        self.avg = 0
        self.sum = 0
        self.max = 0
        self.count = 0
        self.data_points = []

    def update(self, val, n=1):
        self.data_points.append(val)
        self.val = val
        self.max = val if self.count == 0 else max(self.max, val)
        self.sum += val * n
        self.count += n
        self.avg = self.sum / self.count

    def __call__(self, value, n=1):
        self.update(value, n)
        return self.avg

    def __str__(self):
        fmtstr = '{name} {avg' + self.fmt + '} (max {max' + self.fmt + '})'
        return fmtstr.format(**self.__dict__)
