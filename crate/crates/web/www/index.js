import init, { spaceSize, sampleCell, drawCell, WeNetDemo } from "./pkg/wenas_web.js";

const $ = (id) => document.getElementById(id);

function fail(el, e) {
  el.innerHTML = `<span class="err">${e.message ?? e}</span>`;
}

function showCell() {
  const levels = Number($("levels").value);
  try {
    const cell = JSON.parse(sampleCell(levels, Number($("seed").value)));
    $("cell-svg").innerHTML = cell.svg;
    $("cell-pairs").textContent = cell.pairs;
    $("cell-text").value = cell.pairs;
  } catch (e) {
    fail($("cell-svg"), e);
  }
  $("size-levels").textContent = levels;
  try {
    $("size").textContent = BigInt(spaceSize(levels)).toLocaleString();
  } catch (e) {
    fail($("size"), e);
  }
}

let demo = null;
let running = false;

function renderWeights() {
  const w = demo.weights();
  const labels = JSON.parse(demo.labels());
  const order = [...w.keys()].sort((a, b) => w[b] - w[a]);
  const max = Math.max(...w);
  $("weights").innerHTML = order
    .map((i) => {
      const ref = labels[i] === "uniform reference";
      return `<tr data-i="${i}"><td class="mono">${w[i].toFixed(4)}</td>` +
        `<td style="width:40%"><div class="bar${ref ? " ref" : ""}" style="width:${(100 * w[i] / max).toFixed(1)}%"></div></td>` +
        `<td class="mono">${labels[i]}</td></tr>`;
    })
    .join("");
}

function loop() {
  if (!running) return;
  try {
    const loss = demo.trainBatches(4);
    $("status").textContent = `epoch ${demo.progress().toFixed(2)}  batch loss ${loss.toFixed(3)}`;
    renderWeights();
  } catch (e) {
    fail($("status"), e);
    stop();
    return;
  }
  requestAnimationFrame(loop);
}

function stop() {
  running = false;
  $("stop").disabled = true;
  if (demo) {
    try {
      $("status").textContent += `  valid ppl ${demo.validPerplexity().toFixed(3)}`;
    } catch (e) {
      fail($("status"), e);
    }
  }
}

await init();
$("sample").onclick = showCell;
$("levels").onchange = showCell;
$("draw").onclick = () => {
  try {
    $("cell-svg").innerHTML = drawCell($("cell-text").value);
    $("cell-pairs").textContent = "";
  } catch (e) {
    fail($("cell-svg"), e);
  }
};
$("start").onclick = () => {
  try {
    demo?.free();
    demo = new WeNetDemo(Number($("n").value), Number($("mix-levels").value), Number($("mix-seed").value));
  } catch (e) {
    fail($("status"), e);
    return;
  }
  running = true;
  $("stop").disabled = false;
  $("bar-cell").innerHTML = "";
  loop();
};
$("stop").onclick = stop;
$("weights").onclick = (ev) => {
  const row = ev.target.closest("tr");
  if (row && demo) $("bar-cell").innerHTML = demo.cellSvg(Number(row.dataset.i)) ?? "";
};
showCell();
