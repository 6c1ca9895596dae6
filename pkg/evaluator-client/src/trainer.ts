/**
 * Built-in demo trainer: logistic regression on bundled synthetic data whose
 * features are grouped into one block per learning-rate multiplier. Training
 * runs plain gradient descent where group g steps with lr BASE_LR * eta[g],
 * so frozen groups (eta 0) never move and the reported accuracy genuinely
 * depends on the multipliers the host is searching over. Everything is
 * seeded, so identical requests produce identical measurements.
 */

export interface DemoResult {
  accuracy: number;
  loss: number;
}

const FEATURES_PER_BLOCK = 3;
const TRAIN_SAMPLES = 240;
const VAL_SAMPLES = 120;
const FOLDS = 3;
const EPOCHS = 40;
const BASE_LR = 0.4;
const DATA_SEED = 0xb10b5eed;

/** Deterministic 32-bit PRNG (mulberry32). */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

interface Dataset {
  trainX: number[][];
  trainY: number[];
  valX: number[][];
  valY: number[];
  dim: number;
}

const datasets = new Map<number, Dataset>();

function makeDataset(numBlocks: number): Dataset {
  const dim = numBlocks * FEATURES_PER_BLOCK;
  const rand = mulberry32(DATA_SEED ^ numBlocks);
  // every block carries signal, so freezing a block costs accuracy
  const trueW = Array.from({ length: dim }, () => (rand() < 0.5 ? -1 : 1) * (0.5 + rand()));

  const sample = (n: number) => {
    const xs: number[][] = [];
    const ys: number[] = [];
    for (let i = 0; i < n; i++) {
      const x = Array.from({ length: dim }, () => 2 * rand() - 1);
      const logit = x.reduce((acc, v, j) => acc + v * trueW[j], 0);
      xs.push(x);
      ys.push(logit > 0 ? 1 : 0);
    }
    return { xs, ys };
  };

  const train = sample(TRAIN_SAMPLES);
  const val = sample(VAL_SAMPLES);
  return { trainX: train.xs, trainY: train.ys, valX: val.xs, valY: val.ys, dim };
}

function dataset(numBlocks: number): Dataset {
  let ds = datasets.get(numBlocks);
  if (ds === undefined) {
    ds = makeDataset(numBlocks);
    datasets.set(numBlocks, ds);
  }
  return ds;
}

function sigmoid(z: number): number {
  return 1 / (1 + Math.exp(-z));
}

/**
 * Train the grouped logistic model under the given multipliers and report
 * validation accuracy and log-loss.
 */
export function demoTrain(
  eta: number[],
  foldIndex: number,
  seed: number,
  dataFraction: number,
): DemoResult {
  const numBlocks = eta.length;
  if (numBlocks < 1) throw new Error("eta must have at least one block");
  const ds = dataset(numBlocks);

  // rotate over three fixed folds of the training data
  const fold = ((foldIndex % FOLDS) + FOLDS) % FOLDS;
  let indices: number[] = [];
  for (let i = 0; i < ds.trainX.length; i++) {
    if (i % FOLDS === fold) indices.push(i);
  }
  // seed-shuffled subset for the requested data fraction
  const rand = mulberry32((seed >>> 0) ^ 0x5eedcafe);
  for (let i = indices.length - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [indices[i], indices[j]] = [indices[j], indices[i]];
  }
  const fraction = Math.min(Math.max(dataFraction, 0), 1);
  const take = Math.max(1, Math.ceil(indices.length * fraction));
  indices = indices.slice(0, take);

  const w = new Array<number>(ds.dim).fill(0);
  const lr = eta.map((e) => BASE_LR * Math.max(e, 0));
  for (let epoch = 0; epoch < EPOCHS; epoch++) {
    const grad = new Array<number>(ds.dim).fill(0);
    for (const i of indices) {
      const x = ds.trainX[i];
      const err = sigmoid(x.reduce((acc, v, j) => acc + v * w[j], 0)) - ds.trainY[i];
      for (let j = 0; j < ds.dim; j++) grad[j] += err * x[j];
    }
    for (let j = 0; j < ds.dim; j++) {
      const block = Math.floor(j / FEATURES_PER_BLOCK);
      w[j] -= (lr[block] / indices.length) * grad[j];
    }
  }

  let correct = 0;
  let loss = 0;
  for (let i = 0; i < ds.valX.length; i++) {
    const p = sigmoid(ds.valX[i].reduce((acc, v, j) => acc + v * w[j], 0));
    const y = ds.valY[i];
    if ((p >= 0.5 ? 1 : 0) === y) correct++;
    const clamped = Math.min(Math.max(p, 1e-12), 1 - 1e-12);
    loss -= y * Math.log(clamped) + (1 - y) * Math.log(1 - clamped);
  }
  return { accuracy: correct / ds.valX.length, loss: loss / ds.valX.length };
}
