from tqdm.auto import tqdm


class Callback:
    """
    An interface for contract of optimisation callbacks
    """
    def on_train_begin(self, total_steps):
        pass

    def on_step_end(self, step, loss, lr):
        pass

    def on_train_end(self, history):
        pass


class ProgressCallback(Callback):
    """Drive a tqdm bar with the current loss and learning rate"""

    def __init__(self, description="optimise", unit=' steps'):
        self.description = description
        self.unit = unit
        self.progress_bar = None

    def on_train_begin(self, total_steps):
        self.progress_bar = tqdm(total=total_steps, unit=self.unit)
        self.progress_bar.set_description(self.description)

    def on_step_end(self, step, loss, lr):
        self.progress_bar.set_postfix(loss=f"{loss:.5f}", lr=lr)
        self.progress_bar.update()

    def on_train_end(self, history):
        self.progress_bar.close()
