/**
 * Subprocess plumbing for the `endogeo` command-line tool.
 *
 * Every invocation is a fresh process; results come back as `key=value`
 * stdout lines (floats printed with shortest round-trip precision, which
 * `Number` parses back to the identical double).
 */

import { execFileSync } from "node:child_process";

import { EndogeoError } from "./errors.js";

export const CLI_COMMAND = "endogeo";

interface SpawnFailure {
  status?: number | null;
  stderr?: string;
  message?: string;
}

/** Run the CLI and return raw stdout; domain failures rethrow by kind. */
export function runCli(args: string[]): string {
  try {
    return execFileSync(CLI_COMMAND, args, { encoding: "utf8" });
  } catch (err) {
    const failure = err as SpawnFailure;
    const stderr = (failure.stderr ?? "").trim();
    const match = /^error: (\w+): ([\s\S]*)$/.exec(stderr);
    if (failure.status === 1 && match) {
      throw new EndogeoError(match[1], match[2]);
    }
    if (failure.status === 2) {
      throw new EndogeoError("UsageError", stderr || "invalid arguments");
    }
    throw new EndogeoError(
      "SpawnFailure",
      stderr || failure.message || `could not run ${CLI_COMMAND}`,
    );
  }
}

/** Parse `key=value` stdout lines into string values, order preserved. */
export function parseKeyValues(stdout: string): Map<string, string> {
  const out = new Map<string, string>();
  for (const line of stdout.split("\n")) {
    if (line.length === 0) continue;
    const eq = line.indexOf("=");
    if (eq < 0) {
      throw new EndogeoError("MalformedHeader", `unparseable CLI line: ${JSON.stringify(line)}`);
    }
    out.set(line.slice(0, eq), line.slice(eq + 1));
  }
  return out;
}

/** Fetch a numeric field, throwing if the CLI did not print it. */
export function numberField(fields: Map<string, string>, key: string): number {
  const raw = fields.get(key);
  if (raw === undefined) {
    throw new EndogeoError("MalformedHeader", `CLI output is missing "${key}"`);
  }
  const value = Number(raw);
  if (Number.isNaN(value) && raw !== "nan") {
    throw new EndogeoError("MalformedHeader", `field "${key}" is not numeric: ${raw}`);
  }
  return value;
}
