import csv
import io
import json
import logging
import math
import os

import numpy as np
from colorama import Fore, Style

from config import debug_mode, export_path
from icicert_core.convex_fn import GridFunction
from icicert_core.errors import GridFileError, IcicertError


def format_value(value) -> str:
    """Shortest round-trip text of a value; +inf is written as the literal inf."""
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ''
    return str(value)


def jsonable(content):
    """Converts numpy scalars, tuples and non-finite floats to plain JSON values."""
    if isinstance(content, dict):
        return {str(k): jsonable(v) for k, v in content.items()}
    if isinstance(content, (list, tuple, np.ndarray)):
        return [jsonable(v) for v in content]
    if isinstance(content, (bool, np.bool_)):
        return bool(content)
    if isinstance(content, (int, np.integer)):
        return int(content)
    if isinstance(content, (float, np.floating)):
        value = float(content)
        return value if math.isfinite(value) else format_value(value)
    return content


class IOHandler:
    def __init__(self, export_directory: str = ''):
        """
        Initialize an object of the IOHandler class handling IO based functions like creating a folder, writing
        reports and reading grid functions.
        :param export_directory: Directory the reports are written to, export_path/<subcommand> when empty
        """
        self.logger = logging.getLogger(f"{__name__}.{self.__class__.__name__}")
        self.export_directory = export_directory

    def set_export_directory(self, export_directory: str):
        """
        Sets IOHandler.export_directory.
        :param export_directory: Name of the export directory
        """
        self.export_directory = export_directory
        if debug_mode:
            self.logger.debug(f'Set export directory to {export_directory}')

    def create_folder(self, path: str):
        """
        Creates a directory matching the specified path if it does not exist yet.
        :param path: Path to the new directory
        """
        try:
            os.makedirs(path, exist_ok=True)
        except OSError as e:
            self.logger.critical(f'Unable to create folder: {e}')
            print(Fore.RED + f'[icicert] ERROR: Unable to create folder: {e}' + Style.RESET_ALL)
            exit(2)

    def target_path(self, filename: str) -> str:
        """
        Path of a report file inside the export directory, which is created on demand.
        :param filename: Name of the report file
        :return: Full path
        """
        directory = self.export_directory or export_path
        self.create_folder(directory)
        return os.path.join(directory, filename)

    def write_text_to_file(self, filename: str, text: str, encoding: str = 'utf-8', mode='w'):
        """
        Writes the provided text to a file.
        :param filename: Name of the file to write to
        :param text: Text to write to the file
        :param encoding: Encoding, default utf-8
        :param mode: Writing mode, cf. open
        """
        try:
            with open(filename, mode, encoding=encoding, newline='\n') as file:
                file.write(text)
        except OSError as e:
            msg = f'An error occurred while writing to the file: {e}'
            self.logger.critical(msg)
            print(Fore.RED + f'[icicert] ERROR: {msg}' + Style.RESET_ALL)
            exit(2)

    def write_json(self, filename: str, content: dict) -> str:
        """
        Writes a report as JSON with sorted keys and inf literals.
        :param filename: Name of the file inside the export directory
        :param content: Report content
        :return: Path to the written file
        """
        path = self.target_path(filename)
        self.write_text_to_file(path, json.dumps(jsonable(content), ensure_ascii=False, indent=4, sort_keys=True,
                                                 allow_nan=False) + '\n')
        if debug_mode:
            self.logger.debug(f'Wrote {path}')
        return path

    def write_csv(self, filename: str, rows: list[dict]) -> str:
        """
        Writes rows as CSV; the columns are the keys of the first row in their order.
        :param filename: Name of the file inside the export directory
        :param rows: Report rows
        :return: Path to the written file
        """
        path = self.target_path(filename)
        buffer = io.StringIO()
        if rows:
            writer = csv.DictWriter(buffer, fieldnames=list(rows[0].keys()), lineterminator='\n',
                                    extrasaction='ignore')
            writer.writeheader()
            for row in rows:
                writer.writerow({k: format_value(v) for k, v in row.items()})
        self.write_text_to_file(path, buffer.getvalue())
        return path

    def write_grid_csv(self, filename: str, f: GridFunction) -> str:
        """
        Writes a GridFunction as two columns x,value. Linear extensions are written as rows left,linear and
        right,linear before the breakpoints.
        :param filename: Name of the file inside the export directory
        :param f: GridFunction
        :return: Path to the written file
        """
        rows = [{'x': side, 'value': 'linear'} for side, ext in (('left', f.left), ('right', f.right))
                if ext == 'linear']
        rows += [{'x': x, 'value': v} for x, v in zip(f.x, f.values)]
        return self.write_csv(filename, rows)

    def read_grid_csv(self, path: str) -> GridFunction:
        """
        Reads a GridFunction written by write_grid_csv (or by hand in the same layout) and checks its convexity.
        :param path: Path to the CSV file
        :return: GridFunction
        """
        try:
            with open(path, encoding='utf-8', newline='') as file:
                lines = list(csv.reader(file))
        except OSError as e:
            raise GridFileError(path, 0, f'unreadable: {e}')
        if not lines or [c.strip().lower() for c in lines[0]] != ['x', 'value']:
            raise GridFileError(path, 1, 'header must be x,value')
        extensions = {'left': 'inf', 'right': 'inf'}
        xs, values, rows = [], [], []
        for row_number, row in enumerate(lines[1:], start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise GridFileError(path, row_number, f'expected 2 columns, got {len(row)}')
            key, value = row[0].strip().lower(), row[1].strip().lower()
            if key in extensions:
                if value not in ('inf', 'linear'):
                    raise GridFileError(path, row_number, f'unknown extension {value!r}')
                extensions[key] = value
                continue
            try:
                x, v = float(key), float(value)
            except ValueError:
                raise GridFileError(path, row_number, 'non-numeric entry')
            if not math.isfinite(x) or math.isnan(v) or v == -math.inf:
                raise GridFileError(path, row_number, 'breakpoints must be finite and values in (-inf, inf]')
            if xs and x <= xs[-1]:
                raise GridFileError(path, row_number, 'breakpoints must be strictly increasing')
            xs.append(x)
            values.append(v)
            rows.append(row_number)
        if not xs:
            raise GridFileError(path, len(lines), 'no breakpoints')
        try:
            f = GridFunction(np.array(xs), np.array(values), extensions['left'], extensions['right'])
        except (ValueError, IcicertError) as e:
            raise GridFileError(path, rows[0], str(e))
        index = f.convexity_violation()
        if index is not None:
            raise GridFileError(path, rows[min(index, len(rows) - 1)], 'slope decreases, function is not convex')
        if debug_mode:
            self.logger.debug(f'Read {len(xs)} breakpoints from {path}')
        return f
