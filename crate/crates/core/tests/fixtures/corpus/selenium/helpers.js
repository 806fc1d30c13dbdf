const { By } = require('selenium-webdriver');

// not a test file: commands in helpers are instrumented too
async function openMenu(driver) {
  await driver.findElement(By.id('menu')).click();
  await driver.findElement(By.css('.menu .settings')).click();
}

module.exports = { openMenu };
