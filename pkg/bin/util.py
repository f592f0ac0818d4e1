# Logging, progress bars, settings files and report output.

import copy
import shutil
import sys
import threading

from pathlib import Path
from colorama import Fore, Style

import config


def is_windows():
    return sys.platform in ['win32', 'cygwin']


def log(msg):
    print(Fore.GREEN + 'LOG: ' + str(msg) + Style.RESET_ALL, file=sys.stderr)


def verbose(msg):
    if getattr(config.args, 'verbose', 0) >= 1:
        print(Fore.CYAN + 'VERBOSE: ' + str(msg) + Style.RESET_ALL, file=sys.stderr)


def warn(msg):
    print(Fore.YELLOW + 'WARNING: ' + str(msg) + Style.RESET_ALL, file=sys.stderr)
    config.n_warn += 1


def error(msg):
    if config.RUNNING_TEST:
        fatal(msg)
    print(Fore.RED + 'ERROR: ' + str(msg) + Style.RESET_ALL, file=sys.stderr)
    config.n_error += 1


def fatal(msg):
    print(Fore.RED + 'FATAL ERROR: ' + str(msg) + Style.RESET_ALL, file=sys.stderr)
    exit(1)


def no_bar():
    return getattr(config.args, 'no_bar', True)


# A class that draws a progressbar over the levels of a study.
# Construct with a constant prefix and the items to process.
# Start each loop with bar.start(current_item), end it with bar.done(message).
# Optionally, multiple lines can be logged using bar.log(message). If so, the
# final message on bar.done() will be ignored.
class ProgressBar:
    # Lock on all IO via this class.
    lock = threading.Lock()

    current_bar = None

    columns = shutil.get_terminal_size().columns

    def __init__(self, prefix, *, items):
        assert ProgressBar.current_bar is None
        ProgressBar.current_bar = self

        self.prefix = prefix
        self.count = len(items)
        self.item_width = max((len(str(x)) for x in items), default=0) + 1
        self.i = 0
        self.logged = False
        self.global_logged = False
        self.parent = None
        self.item = None

    def total_width(self):
        cols = ProgressBar.columns
        if is_windows():
            cols -= 1
        return cols

    def clearline(self):
        if no_bar():
            return
        assert self.lock.locked()
        print('\033[K', end='', flush=True, file=sys.stderr)

    def get_prefix(self):
        item = '' if self.item is None else str(self.item)
        return f'{Fore.CYAN}{self.prefix}{Style.RESET_ALL}: {item:<{self.item_width}}'

    def get_bar(self):
        bar_width = self.total_width() - len(self.prefix) - 2 - self.item_width
        if bar_width < 4:
            return ''
        done = (self.i - 1) * (bar_width - 2) // self.count
        text = f' {self.i}/{self.count}'
        fill = '#' * done + '-' * (bar_width - 2 - done)
        if len(text) <= len(fill):
            fill = fill[: -len(text)] + text
        return '[' + fill + ']'

    def start(self, item=''):
        with self.lock:
            # start may only be called on the root bar.
            assert self.parent is None
            self.i += 1
            assert self.i <= self.count
            self.item = item
            self.logged = False
            bar_copy = copy.copy(self)
            bar_copy.parent = self
            if not no_bar():
                print(self.get_prefix(), self.get_bar(), sep='', end='\r', flush=True, file=sys.stderr)
            return bar_copy

    # Log can be called multiple times to make multiple persistent lines.
    def log(self, message='', color=Fore.GREEN, *, needs_lock=True):
        if needs_lock:
            self.lock.acquire()
        self.clearline()
        self.logged = True
        if self.parent:
            self.parent.global_logged = True
        else:
            self.global_logged = True
        print(self.get_prefix(), color, message, Style.RESET_ALL, sep='', flush=True, file=sys.stderr)
        if needs_lock:
            self.lock.release()

    def warn(self, message=''):
        config.n_warn += 1
        self.log(message, Fore.YELLOW)

    def error(self, message=''):
        if config.RUNNING_TEST:
            fatal(message)
        config.n_error += 1
        self.log(message, Fore.RED)

    # Log a final line if it's an error or if nothing was printed yet and we're in verbose mode.
    def done(self, success=True, message=''):
        with self.lock:
            self.clearline()
            if not self.logged:
                if not success:
                    config.n_error += 1
                if getattr(config.args, 'verbose', 0) or not success:
                    self.log(message, Fore.GREEN if success else Fore.RED, needs_lock=False)

    # Print a final 'Done' message in case nothing was printed yet.
    def finalize(self, *, print_done=True):
        with self.lock:
            self.clearline()
            assert self.parent is None
            self.item = None
            if print_done and not self.global_logged:
                print(self.get_prefix(), f'{Fore.GREEN}Done{Style.RESET_ALL}', sep='', file=sys.stderr)
            if self.global_logged:
                print(file=sys.stderr)

        assert ProgressBar.current_bar is not None
        ProgressBar.current_bar = None
        return self.global_logged


def parse_yaml(data, path=None):
    import yaml

    try:
        return yaml.safe_load(data)
    except yaml.YAMLError as e:
        fatal(f'Failed to parse {path if path is not None else "yaml object"}:\n{e}')


def read_yaml(path):
    assert path.is_file()
    return parse_yaml(path.read_text(), path=path)


# Wrapper around read_yaml that returns an empty dictionary by default.
def read_yaml_settings(path):
    settings = {}
    if path.is_file():
        data = read_yaml(path)
        if data is None:
            return settings
        if not isinstance(data, dict):
            fatal(f'{path} must contain a mapping of settings.')
        for key, value in data.items():
            settings[key.replace('-', '_')] = value
    return settings


def parse_int_list(text):
    if isinstance(text, list):
        return [int(x) for x in text]
    try:
        return [int(x) for x in str(text).split(',') if x.strip() != '']
    except ValueError:
        fatal(f'Expected a comma separated list of integers, got {text!r}.')


def parse_float_list(text):
    if isinstance(text, list):
        return [float(x) for x in text]
    try:
        return [float(x) for x in str(text).split(',') if x.strip() != '']
    except ValueError:
        fatal(f'Expected a comma separated list of numbers, got {text!r}.')


# Write a pandas frame as CSV, preceded by '#'-prefixed comment lines.
def write_csv(path, frame, comments=()):
    lines = ''.join(f'# {c}\n' for c in comments)
    body = frame.to_csv(index=False, float_format=config.CSV_FLOAT_FORMAT, lineterminator='\n')
    path = Path(path)
    if path.parent != Path('.'):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(lines + body)
    return path
