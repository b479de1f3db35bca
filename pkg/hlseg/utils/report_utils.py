import html
import json
import logging
import os
from datetime import datetime
from typing import Dict, List, Optional

logger = logging.getLogger(__name__)


def _cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.4g}"
    if isinstance(value, (dict, list)):
        return html.escape(json.dumps(value))
    return html.escape(str(value))


def generate_html_report(command: str, start_time: datetime, summary: Dict[str, object],
                         details: Optional[List[Dict[str, object]]] = None,
                         report_filepath: str = "hlseg_report.html") -> str:
    """
    Generate a standalone HTML report for one CLI run.

    Args:
        command: Sub-command name
        start_time: When the run started
        summary: Key/value results shown in the summary table
        details: Optional rows (dicts with shared keys) for the details table;
            a boolean ``ok`` key colours the row
        report_filepath: Output path

    Returns:
        Path of the written report
    """
    duration = datetime.now() - start_time
    report_time = start_time.strftime('%Y-%m-%d %H:%M:%S')

    page = f"""<!DOCTYPE html>
<html>
<head>
    <meta charset="utf-8"/>
    <title>hlseg {command} report</title>
    <style>
      body {{ font-family: Arial, sans-serif; margin: 10px; }}
      .summary-table {{ border-collapse: collapse; width: 100%; margin-bottom: 20px; }}
      .summary-table th, .summary-table td {{ border: 1px solid #ddd; padding: 6px; text-align: left; font-size: 12px; }}
      .summary-table th {{ background-color: #e6f7ff; }}
      .details-table {{ border-collapse: collapse; width: 100%; margin-top: 20px; margin-bottom: 10px; }}
      .details-table th, .details-table td {{ border: 1px solid #ddd; padding: 6px; font-size: 14px; text-align: left; }}
      .details-table th {{ background-color: #e6f7ff; }}
      .summary-container {{ display: flex; width: 100%; margin: 0 0 20px 0; gap: 20px; }}
      .summary-details, .summary-summary {{ flex: 1; }}
      .pass {{ color: green; }}
      .fail {{ color: red; }}
    </style>
</head>
<body>
  <h1>hlseg report: {html.escape(command)}</h1>
  <div class="summary-container">
    <div class="summary-details">
      <h3>Execution Details</h3>
      <table class="summary-table" style="margin-left: 20px;">
        <thead><tr><th>Detail</th><th>Value</th></tr></thead>
        <tbody>
          <tr><td>Command</td><td>{html.escape(command)}</td></tr>
          <tr><td>Started at</td><td>{report_time}</td></tr>
          <tr><td>Duration</td><td>{duration}</td></tr>
        </tbody>
      </table>
    </div>
    <div class="summary-summary">
      <h3>Results</h3>
      <table class="summary-table" style="margin-left: 20px;">
        <thead><tr><th>Metric</th><th>Value</th></tr></thead>
        <tbody>
"""
    for key, value in summary.items():
        page += f"          <tr><td>{html.escape(str(key))}</td><td>{_cell(value)}</td></tr>\n"
    page += "        </tbody>\n      </table>\n    </div>\n  </div>\n"

    if details:
        columns = [c for c in details[0] if c != "ok"]
        page += "  <h2>Details</h2>\n  <table class=\"details-table\"><thead><tr>"
        page += "".join(f"<th>{html.escape(str(c))}</th>" for c in columns)
        page += "</tr></thead><tbody>\n"
        for row in details:
            status_class = {True: ' class="pass"', False: ' class="fail"'}.get(row.get("ok"), "")
            page += f"<tr{status_class}>" + "".join(f"<td>{_cell(row.get(c, ''))}</td>" for c in columns) + "</tr>\n"
        page += "  </tbody></table>\n"
    page += "</body></html>"

    directory = os.path.dirname(os.path.abspath(report_filepath))
    os.makedirs(directory, exist_ok=True)
    with open(report_filepath, 'w') as f:
        f.write(page)
    logger.info("HTML report generated: %s", report_filepath)
    return report_filepath
