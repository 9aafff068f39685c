/** Typed errors mirroring the CLI's machine-readable codes and exit codes. */

export class ClientError extends Error {
  /** Machine-readable code attached by the core (e.g. "leverage_infeasible"). */
  readonly code: string;
  /** CLI exit status that produced this error (0 means client-side). */
  readonly exitCode: number;

  constructor(message: string, code: string, exitCode: number) {
    super(message);
    this.name = new.target.name;
    this.code = code;
    this.exitCode = exitCode;
  }
}

/** Invalid or inconsistent analysis configuration (CLI exit 2). */
export class ConfigError extends ClientError {}

/** Unusable input data (CLI exit 3). */
export class DataError extends ClientError {}

/** Numeric infeasibility, e.g. leverage-one rows under HC2 (CLI exit 4). */
export class InfeasibleError extends ClientError {}

/** A handle was used after close, or closed twice. */
export class HandleClosedError extends ClientError {
  constructor(message: string) {
    super(message, "handle_closed", 0);
  }
}

const STDERR_CODE = /\[([a-z_]+)\]/;

export function errorFromExit(status: number, stderr: string): ClientError {
  const match = STDERR_CODE.exec(stderr);
  const code = match?.[1] ?? "error";
  const message = stderr.trim() || `analyze exited with status ${status}`;
  switch (status) {
    case 2:
      return new ConfigError(message, code, status);
    case 3:
      return new DataError(message, code, status);
    case 4:
      return new InfeasibleError(message, code, status);
    default:
      return new ClientError(message, code, status);
  }
}
