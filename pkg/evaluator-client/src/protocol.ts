/**
 * Worker side of the evaluator wire protocol: one JSON message per line on
 * stdin/stdout. The host opens with a hello (carrying the block count), we
 * answer ready, then every evaluate request is answered by exactly one
 * fitness response echoing its request_id. Aggregation across seeds is the
 * host's job; we only report per-seed measurements.
 */

import * as readline from "node:readline";
import type { Readable, Writable } from "node:stream";

export const PROTOCOL_VERSION = 1;

export interface TrainResult {
  accuracy: number;
  loss: number;
}

/** Maps (eta, foldIndex, seed, dataFraction) to one training measurement. */
export type TrainFn = (
  eta: number[],
  foldIndex: number,
  seed: number,
  dataFraction: number,
) => TrainResult;

export interface EvaluateMessage {
  type: "evaluate";
  protocol_version: number;
  request_id: number;
  genome: number[];
  eta: number[];
  generation: number;
  fold_index: number;
  seeds: number[];
  data_fraction: number;
}

interface FitnessReply {
  type: "fitness";
  request_id: number;
  status: "ok" | "error";
  per_seed_accuracy: number[];
  per_seed_loss: number[];
  message: string | null;
}

export interface ServerHooks {
  /** Called once the host says hello; receives the announced block count. */
  onHello?: (numBlocks: number) => void;
  /** Called on shutdown; defaults are installed by main (process.exit). */
  onShutdown?: () => void;
}

export class EvaluatorServer {
  private numBlocks: number | null = null;

  constructor(
    private readonly train: TrainFn,
    private readonly hooks: ServerHooks = {},
  ) {}

  /** Wire the server to a pair of streams; resolves when input ends. */
  serve(input: Readable, output: Writable): Promise<void> {
    const rl = readline.createInterface({ input, crlfDelay: Infinity });
    const send = (obj: unknown) => output.write(JSON.stringify(obj) + "\n");

    return new Promise((resolve) => {
      rl.on("line", (line) => {
        line = line.trim();
        if (line.length === 0) return;
        let msg: Record<string, unknown>;
        try {
          msg = JSON.parse(line) as Record<string, unknown>;
        } catch {
          send(this.errorReply(-1, `not valid JSON: ${line.slice(0, 80)}`));
          return;
        }
        switch (msg.type) {
          case "hello": {
            this.numBlocks = Number(msg.num_blocks ?? 0);
            this.hooks.onHello?.(this.numBlocks);
            send({ type: "ready", protocol_version: PROTOCOL_VERSION });
            break;
          }
          case "evaluate": {
            send(this.handleEvaluate(msg as unknown as EvaluateMessage));
            break;
          }
          case "shutdown": {
            rl.close();
            this.hooks.onShutdown?.();
            break;
          }
          default:
            send(this.errorReply(this.requestIdOf(msg), `unknown message type: ${String(msg.type)}`));
        }
      });
      rl.on("close", () => resolve());
    });
  }

  private requestIdOf(msg: Record<string, unknown>): number {
    const id = msg.request_id;
    return typeof id === "number" && Number.isFinite(id) ? id : -1;
  }

  private errorReply(requestId: number, message: string): FitnessReply {
    return {
      type: "fitness",
      request_id: requestId,
      status: "error",
      per_seed_accuracy: [],
      per_seed_loss: [],
      message,
    };
  }

  private handleEvaluate(msg: EvaluateMessage): FitnessReply {
    try {
      if (!Array.isArray(msg.eta) || !Array.isArray(msg.seeds)) {
        return this.errorReply(this.requestIdOf(msg as never), "evaluate needs eta and seeds arrays");
      }
      const accuracies: number[] = [];
      const losses: number[] = [];
      for (const seed of msg.seeds) {
        const { accuracy, loss } = this.train(
          msg.eta,
          msg.fold_index,
          seed,
          msg.data_fraction,
        );
        accuracies.push(accuracy);
        losses.push(loss);
      }
      return {
        type: "fitness",
        request_id: msg.request_id,
        status: "ok",
        per_seed_accuracy: accuracies,
        per_seed_loss: losses,
        message: null,
      };
    } catch (err) {
      return this.errorReply(
        this.requestIdOf(msg as never),
        err instanceof Error ? err.message : String(err),
      );
    }
  }
}
